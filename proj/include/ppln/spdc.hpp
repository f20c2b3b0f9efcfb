#pragma once

// Classical design layer of the type-II PPLN source: dispersion, quasi-phase
// matching, the two-branch emission spectrum and its Bragg filtering.
//
// Units at this boundary: wavelengths in nm, poling period in um, temperature
// in degC, wave-vector mismatch in rad/um, times in ps.

#include "ppln/keyvalue.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <span>
#include <utility>
#include <vector>

namespace ppln::spdc {

// Polarization of the guided mode. In the Z-cut geometry used here H (TE) sees
// the ordinary index and V (TM) the extraordinary index.
enum class Polarization { H, V };

const char* to_string(Polarization p);

// Temperature-dependent Sellmeier form (Edwards-Lawrence type):
//   n^2 = a1 + (a2 + b1 F) / (L^2 - (a3 + b2 F)^2) + b3 F - a4 L^2
//   F   = (T - t0) (T + t0 + 546),   L in um, T in degC.
struct SellmeierCoefficients {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
  double t0 = 24.5;
};

struct DispersionModel {
  SellmeierCoefficients h;
  SellmeierCoefficients v;
  double offset_h = 0.0;
  double offset_v = 0.0;
  bool calibrated = false;
  std::string source = "<inline>";

  const SellmeierCoefficients& coefficients(Polarization p) const {
    return p == Polarization::H ? h : v;
  }
  double offset(Polarization p) const { return p == Polarization::H ? offset_h : offset_v; }
  double& offset(Polarization p) { return p == Polarization::H ? offset_h : offset_v; }

  // Keys: sellmeier.<H|V>.a1..a4, thermo.<H|V>.b1..b3, thermo.<H|V>.t0,
  // offset.<H|V> (optional), calibrated (optional).
  static DispersionModel from_keyvalues(const KeyValueFile& kv);
  static DispersionModel load(const std::filesystem::path& path);
  KeyValueFile to_keyvalues() const;
};

inline constexpr double kMinWavelengthNm = 400.0;
inline constexpr double kMaxWavelengthNm = 2000.0;

double refractive_index(const DispersionModel& model, double lambda_nm, double temperature_c,
                        Polarization pol);
// dn/dlambda in 1/nm.
double refractive_index_slope(const DispersionModel& model, double lambda_nm,
                              double temperature_c, Polarization pol);

struct QpmConfig {
  double poling_period_um = 6.6;
  double temperature_c = 96.8;
  double pump_nm = 655.0;
  // Only used by sinc^2 sensitivity studies; no default anchored to a measurement.
  std::optional<double> interaction_length_mm;
  Polarization pump = Polarization::H;
  Polarization signal = Polarization::H;
  Polarization idler = Polarization::V;

  void validate() const;
};

// Energy conservation: 1/idler = 1/pump - 1/signal.
double idler_wavelength(double pump_nm, double signal_nm);

// 2 pi [n_p/l_p - n_s/l_s - n_i/l_i - 1/period], lengths in um.
double delta_k(const QpmConfig& cfg, const DispersionModel& model, double signal_nm);
// d(delta_k)/d(signal wavelength) with the idler slaved by energy conservation, rad/um per nm.
double delta_k_signal_slope(const QpmConfig& cfg, const DispersionModel& model, double signal_nm);

struct PeriodSolution {
  double period_um = 0.0;
  double residual_rad_per_um = 0.0;
  bool calibrated_model = false;
  int iterations = 0;
};

inline constexpr double kPeriodSearchMinUm = 4.0;
inline constexpr double kPeriodSearchMaxUm = 20.0;
inline constexpr double kDeltaKTolerance = 1e-9;

// Poling period phase-matching degenerate emission at 2*pump, by bisection.
PeriodSolution find_degenerate_period(const DispersionModel& model, double pump_nm,
                                      double temperature_c,
                                      Polarization pump = Polarization::H,
                                      Polarization signal = Polarization::H,
                                      Polarization idler = Polarization::V);

struct CalibrationAnchor {
  double poling_period_um = 6.6;
  double temperature_c = 96.8;
  double pump_nm = 655.0;
  Polarization calibrated_polarization = Polarization::V;
};

// Shifts the offset of anchor.calibrated_polarization so that the anchor is an
// exact degenerate QPM point. Delta-k is affine in the offset, so one update is exact.
DispersionModel calibrate_offsets(const DispersionModel& model,
                                  const CalibrationAnchor& anchor = {});

struct TuningPoint {
  double temperature_c = 0.0;
  double signal_nm = 0.0;
  double idler_nm = 0.0;
  double slope = 0.0;  // d(delta_k)/d(signal) at the root
  bool degenerate = false;
};

struct TemperatureRange {
  double start_c = 90.0;
  double stop_c = 104.0;
  double step_c = 0.1;
};

// For each temperature, every signal wavelength solving delta_k = 0 with both
// photons inside the dispersion-model range. Temperatures without a root are skipped.
std::vector<TuningPoint> tuning_curve(const QpmConfig& cfg, const DispersionModel& model,
                                      const TemperatureRange& range,
                                      double degeneracy_tolerance_nm = 0.05);

// ---------------------------------------------------------------------------
// Emission spectrum

enum class LineShape { gaussian, sinc2 };
enum class FilterShape { gaussian, flat_top };

const char* to_string(LineShape s);
const char* to_string(FilterShape s);
LineShape line_shape_from_string(const std::string& s);
FilterShape filter_shape_from_string(const std::string& s);

// One QPM solution. The pair is distributed along the energy-conservation line
// (CW pump): the H photon wavelength follows `shape` around center_h with
// the given FWHM, the V photon is slaved by 1/l_H + 1/l_V = 1/l_pump.
struct SpectralBranch {
  double center_h_nm = 0.0;
  double center_v_nm = 0.0;
  double fwhm_nm = 0.0;
  double weight = 0.0;
  LineShape shape = LineShape::gaussian;
};

struct FilterSpec {
  double center_nm = 1310.0;
  double fwhm_nm = 0.5;
  FilterShape shape = FilterShape::gaussian;

  double transmission(double lambda_nm) const;
};

struct EmissionSpectrum {
  double pump_nm = 0.0;
  // branches[0] is the degenerate solution of interest; the rest are sidebands.
  std::vector<SpectralBranch> branches;
  // Filters already applied, in order; both photons see every filter.
  std::vector<FilterSpec> filters;

  double sideband_fraction() const;
  // Ceiling on two-photon indistinguishability set by spectral sidebands.
  double indistinguishability() const { return 1.0 - sideband_fraction(); }
};

inline constexpr double kDegenerateCenterNm = 1309.8;
inline constexpr std::pair<double, double> kSidebandCentersNm{1308.7, 1310.9};

EmissionSpectrum build_spectrum(double primary_fwhm_nm, double sideband_fraction,
                                std::pair<double, double> branch2_centers_nm = kSidebandCentersNm,
                                double degenerate_center_nm = kDegenerateCenterNm,
                                LineShape shape = LineShape::gaussian);

struct FilterResult {
  EmissionSpectrum spectrum;
  double transmitted_fraction = 0.0;
  double post_filter_sideband_fraction = 0.0;
};

FilterResult apply_filter(const EmissionSpectrum& spectrum, const FilterSpec& filter);

// Probability that a pair of `branch` survives `filters`, relative to the unfiltered branch.
double branch_pair_transmission(const SpectralBranch& branch, double pump_nm,
                                const std::vector<FilterSpec>& filters);

// Normalized single-photon spectral density (1/nm) for one polarization.
double marginal_density(const EmissionSpectrum& spectrum, Polarization pol, double lambda_nm);
std::vector<double> marginal_density(const EmissionSpectrum& spectrum, Polarization pol,
                                     std::span<const double> lambdas_nm);

// 0.44 lambda^2 / (c dlambda), in ps.
double coherence_time(double lambda_nm, double delta_lambda_fwhm_nm);

// Bandwidth in GHz of a wavelength FWHM: c dlambda / lambda^2.
double bandwidth_ghz(double lambda_nm, double delta_lambda_nm);

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

}  // namespace ppln::spdc
