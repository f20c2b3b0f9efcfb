#include "ppln/spdc.hpp"

#include "ppln/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace ppln::spdc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// sinc^2(u) = 1/2 at u = 1.3915573782...
constexpr double kSincHalfMax = 1.39155737825151;

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void check_wavelength(double lambda_nm) {
  require(std::isfinite(lambda_nm) && lambda_nm >= kMinWavelengthNm &&
              lambda_nm <= kMaxWavelengthNm,
          ErrorCode::out_of_range,
          "wavelength " + fmt_double(lambda_nm) + " nm outside dispersion model range [400, 2000]");
}

struct SellmeierTerms {
  double n2 = 0.0;
  double dn2_dl_um = 0.0;
};

SellmeierTerms sellmeier(const SellmeierCoefficients& c, double lambda_nm, double temperature_c) {
  const double l = lambda_nm * 1e-3;
  const double f = (temperature_c - c.t0) * (temperature_c + c.t0 + 546.0);
  const double num = c.a2 + c.b1 * f;
  const double pole = c.a3 + c.b2 * f;
  const double den = l * l - pole * pole;
  SellmeierTerms t;
  t.n2 = c.a1 + num / den + c.b3 * f - c.a4 * l * l;
  t.dn2_dl_um = -2.0 * l * num / (den * den) - 2.0 * c.a4 * l;
  return t;
}

double line_profile(LineShape shape, double x, double fwhm) {
  if (shape == LineShape::gaussian) return std::exp(-4.0 * std::numbers::ln2 * x * x / (fwhm * fwhm));
  const double u = 2.0 * kSincHalfMax * x / fwhm;
  if (std::abs(u) < 1e-8) return 1.0;
  const double s = std::sin(u) / u;
  return s * s;
}

double line_half_span(LineShape shape, double fwhm) {
  return shape == LineShape::gaussian ? 6.0 * fwhm : 60.0 * fwhm;
}

double slaved_wavelength(double pump_nm, double lambda_nm) {
  return 1.0 / (1.0 / pump_nm - 1.0 / lambda_nm);
}

double filters_product(const std::vector<FilterSpec>& filters, double lh, double lv) {
  double t = 1.0;
  for (const auto& f : filters) t *= f.transmission(lh) * f.transmission(lv);
  return t;
}

template <class F>
double integrate(F&& f, std::vector<double> breaks) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] <= breaks[i]) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, breaks[i],
                                                                           breaks[i + 1], 12, 1e-12);
  }
  return total;
}

// Integration interval in H-photon detuning x plus breakpoints where the
// integrand changes character. Empty optional when flat-top filters exclude everything.
struct Domain {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> breaks;
  bool empty = false;
};

Domain pair_domain(const SpectralBranch& b, double pump_nm, const std::vector<FilterSpec>& filters) {
  Domain d;
  const double span = line_half_span(b.shape, b.fwhm_nm);
  d.lo = -span;
  d.hi = span;
  // l_V must stay positive: l_H > pump.
  d.lo = std::max(d.lo, pump_nm * 1.0001 - b.center_h_nm);
  for (const auto& f : filters) {
    const double lo_f = f.center_nm - 0.5 * f.fwhm_nm;
    const double hi_f = f.center_nm + 0.5 * f.fwhm_nm;
    if (f.shape == FilterShape::flat_top) {
      // l_V decreases as l_H increases.
      double h_lo = lo_f;
      double h_hi = hi_f;
      if (hi_f > pump_nm) h_lo = std::max(h_lo, slaved_wavelength(pump_nm, hi_f));
      if (lo_f > pump_nm) h_hi = std::min(h_hi, slaved_wavelength(pump_nm, lo_f));
      else h_hi = h_lo - 1.0;  // V photon can never pass
      d.lo = std::max(d.lo, h_lo - b.center_h_nm);
      d.hi = std::min(d.hi, h_hi - b.center_h_nm);
    } else {
      for (double k : {-1.0, 0.0, 1.0}) {
        d.breaks.push_back(f.center_nm + k * f.fwhm_nm - b.center_h_nm);
        const double lv = f.center_nm + k * f.fwhm_nm;
        if (lv > pump_nm) d.breaks.push_back(slaved_wavelength(pump_nm, lv) - b.center_h_nm);
      }
    }
  }
  if (d.hi <= d.lo) {
    d.empty = true;
    return d;
  }
  for (double k : {-1.0, 0.0, 1.0}) d.breaks.push_back(k * b.fwhm_nm);
  std::vector<double> kept{d.lo, d.hi};
  for (double x : d.breaks)
    if (x > d.lo && x < d.hi) kept.push_back(x);
  d.breaks = std::move(kept);
  return d;
}

double branch_norm(const SpectralBranch& b) {
  const double span = line_half_span(b.shape, b.fwhm_nm);
  auto g = [&](double x) { return line_profile(b.shape, x, b.fwhm_nm); };
  return integrate(g, {-span, -b.fwhm_nm, 0.0, b.fwhm_nm, span});
}

// Integral of the filtered H-photon line, unnormalized.
double filtered_integral(const SpectralBranch& b, double pump_nm,
                         const std::vector<FilterSpec>& filters) {
  const Domain d = pair_domain(b, pump_nm, filters);
  if (d.empty) return 0.0;
  auto integrand = [&](double x) {
    const double lh = b.center_h_nm + x;
    return line_profile(b.shape, x, b.fwhm_nm) *
           filters_product(filters, lh, slaved_wavelength(pump_nm, lh));
  };
  return integrate(integrand, d.breaks);
}

}  // namespace

const char* to_string(Polarization p) { return p == Polarization::H ? "H" : "V"; }

const char* to_string(LineShape s) { return s == LineShape::gaussian ? "gaussian" : "sinc2"; }

const char* to_string(FilterShape s) { return s == FilterShape::gaussian ? "gaussian" : "flat-top"; }

LineShape line_shape_from_string(const std::string& s) {
  if (s == "gaussian") return LineShape::gaussian;
  if (s == "sinc2") return LineShape::sinc2;
  throw Error(ErrorCode::parse, "unknown line shape '" + s + "' (gaussian | sinc2)");
}

FilterShape filter_shape_from_string(const std::string& s) {
  if (s == "gaussian") return FilterShape::gaussian;
  if (s == "flat-top" || s == "flat_top") return FilterShape::flat_top;
  throw Error(ErrorCode::parse, "unknown filter shape '" + s + "' (gaussian | flat-top)");
}

// ---------------------------------------------------------------------------
// Dispersion

DispersionModel DispersionModel::from_keyvalues(const KeyValueFile& kv) {
  DispersionModel m;
  m.source = kv.origin();
  for (Polarization p : {Polarization::H, Polarization::V}) {
    const std::string pol = to_string(p);
    SellmeierCoefficients c;
    c.a1 = kv.get_double("sellmeier." + pol + ".a1");
    c.a2 = kv.get_double("sellmeier." + pol + ".a2");
    c.a3 = kv.get_double("sellmeier." + pol + ".a3");
    c.a4 = kv.get_double("sellmeier." + pol + ".a4");
    c.b1 = kv.get_double("thermo." + pol + ".b1");
    c.b2 = kv.get_double("thermo." + pol + ".b2");
    c.b3 = kv.get_double("thermo." + pol + ".b3");
    c.t0 = kv.get_double("thermo." + pol + ".t0", 24.5);
    (p == Polarization::H ? m.h : m.v) = c;
    m.offset(p) = kv.get_double("offset." + pol, 0.0);
  }
  m.calibrated = kv.get_bool("calibrated", false);
  return m;
}

DispersionModel DispersionModel::load(const std::filesystem::path& path) {
  return from_keyvalues(KeyValueFile::load(path));
}

KeyValueFile DispersionModel::to_keyvalues() const {
  KeyValueFile kv;
  for (Polarization p : {Polarization::H, Polarization::V}) {
    const std::string pol = to_string(p);
    const auto& c = coefficients(p);
    kv.set("sellmeier." + pol + ".a1", fmt_double(c.a1));
    kv.set("sellmeier." + pol + ".a2", fmt_double(c.a2));
    kv.set("sellmeier." + pol + ".a3", fmt_double(c.a3));
    kv.set("sellmeier." + pol + ".a4", fmt_double(c.a4));
    kv.set("thermo." + pol + ".b1", fmt_double(c.b1));
    kv.set("thermo." + pol + ".b2", fmt_double(c.b2));
    kv.set("thermo." + pol + ".b3", fmt_double(c.b3));
    kv.set("thermo." + pol + ".t0", fmt_double(c.t0));
    kv.set("offset." + pol, fmt_double(offset(p)));
  }
  kv.set("calibrated", calibrated ? "true" : "false");
  return kv;
}

double refractive_index(const DispersionModel& model, double lambda_nm, double temperature_c,
                        Polarization pol) {
  check_wavelength(lambda_nm);
  require(std::isfinite(temperature_c), ErrorCode::invalid_argument, "temperature must be finite");
  const auto t = sellmeier(model.coefficients(pol), lambda_nm, temperature_c);
  require(t.n2 > 1.0, ErrorCode::out_of_range, "Sellmeier table yields n^2 <= 1");
  return std::sqrt(t.n2) + model.offset(pol);
}

double refractive_index_slope(const DispersionModel& model, double lambda_nm,
                              double temperature_c, Polarization pol) {
  check_wavelength(lambda_nm);
  const auto t = sellmeier(model.coefficients(pol), lambda_nm, temperature_c);
  return t.dn2_dl_um / (2.0 * std::sqrt(t.n2)) * 1e-3;
}

// ---------------------------------------------------------------------------
// Phase matching

void QpmConfig::validate() const {
  require(std::isfinite(poling_period_um) && poling_period_um > 0.0, ErrorCode::invalid_argument,
          "poling period must be positive");
  require(!interaction_length_mm || *interaction_length_mm > 0.0, ErrorCode::invalid_argument,
          "interaction length must be positive");
  require(std::isfinite(pump_nm) && pump_nm > 0.0, ErrorCode::invalid_argument,
          "pump wavelength must be positive");
  require(std::isfinite(temperature_c), ErrorCode::invalid_argument, "temperature must be finite");
}

double idler_wavelength(double pump_nm, double signal_nm) {
  require(signal_nm > pump_nm, ErrorCode::invalid_argument,
          "energy conservation violated: signal wavelength must exceed the pump wavelength");
  return slaved_wavelength(pump_nm, signal_nm);
}

double delta_k(const QpmConfig& cfg, const DispersionModel& model, double signal_nm) {
  cfg.validate();
  const double idler_nm = idler_wavelength(cfg.pump_nm, signal_nm);
  const double t = cfg.temperature_c;
  const double np = refractive_index(model, cfg.pump_nm, t, cfg.pump);
  const double ns = refractive_index(model, signal_nm, t, cfg.signal);
  const double ni = refractive_index(model, idler_nm, t, cfg.idler);
  const double grating = std::isinf(cfg.poling_period_um) ? 0.0 : 1.0 / cfg.poling_period_um;
  return kTwoPi * (np / (cfg.pump_nm * 1e-3) - ns / (signal_nm * 1e-3) - ni / (idler_nm * 1e-3) -
                   grating);
}

double delta_k_signal_slope(const QpmConfig& cfg, const DispersionModel& model, double signal_nm) {
  const double idler_nm = idler_wavelength(cfg.pump_nm, signal_nm);
  const double t = cfg.temperature_c;
  const double ls = signal_nm * 1e-3;
  const double li = idler_nm * 1e-3;
  const double ns = refractive_index(model, signal_nm, t, cfg.signal);
  const double ni = refractive_index(model, idler_nm, t, cfg.idler);
  const double dns = refractive_index_slope(model, signal_nm, t, cfg.signal) * 1e3;
  const double dni = refractive_index_slope(model, idler_nm, t, cfg.idler) * 1e3;
  const double per_um = -kTwoPi / (ls * ls) * (dns * ls - ns - dni * li + ni);
  return per_um * 1e-3;
}

PeriodSolution find_degenerate_period(const DispersionModel& model, double pump_nm,
                                      double temperature_c, Polarization pump,
                                      Polarization signal, Polarization idler) {
  QpmConfig cfg;
  cfg.pump_nm = pump_nm;
  cfg.temperature_c = temperature_c;
  cfg.pump = pump;
  cfg.signal = signal;
  cfg.idler = idler;
  const double degenerate_nm = 2.0 * pump_nm;
  auto mismatch = [&](double period) {
    cfg.poling_period_um = period;
    return delta_k(cfg, model, degenerate_nm);
  };

  double lo = kPeriodSearchMinUm;
  double hi = kPeriodSearchMaxUm;
  double f_lo = mismatch(lo);
  const double f_hi = mismatch(hi);
  if (f_lo == 0.0) return {lo, 0.0, model.calibrated, 0};
  if (f_hi == 0.0) return {hi, 0.0, model.calibrated, 0};
  if ((f_lo > 0.0) == (f_hi > 0.0))
    throw Error(ErrorCode::no_solution,
                "no phase-matching solution: delta_k does not change sign for poling periods in [" +
                    fmt_double(lo) + ", " + fmt_double(hi) + "] um at pump " +
                    fmt_double(pump_nm) + " nm");

  PeriodSolution sol;
  sol.calibrated_model = model.calibrated;
  for (int it = 1; it <= 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = mismatch(mid);
    sol.period_um = mid;
    sol.residual_rad_per_um = f_mid;
    sol.iterations = it;
    if (std::abs(f_mid) < kDeltaKTolerance) return sol;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  throw Error(ErrorCode::no_convergence,
              "period bisection stalled with residual " + fmt_double(sol.residual_rad_per_um));
}

DispersionModel calibrate_offsets(const DispersionModel& model, const CalibrationAnchor& anchor) {
  QpmConfig cfg;
  cfg.poling_period_um = anchor.poling_period_um;
  cfg.temperature_c = anchor.temperature_c;
  cfg.pump_nm = anchor.pump_nm;
  const double lp = anchor.pump_nm * 1e-3;
  const double ls = 2.0 * lp;
  const auto on = [&](Polarization p) { return p == anchor.calibrated_polarization ? 1.0 : 0.0; };
  // d(delta_k)/d(offset)
  const double sensitivity =
      kTwoPi * (on(cfg.pump) / lp - on(cfg.signal) / ls - on(cfg.idler) / ls);
  require(sensitivity != 0.0, ErrorCode::invalid_argument,
          "calibrated polarization does not enter the phase-matching condition");

  DispersionModel out = model;
  const double residual = delta_k(cfg, out, 2.0 * anchor.pump_nm);
  out.offset(anchor.calibrated_polarization) -= residual / sensitivity;
  const double after = delta_k(cfg, out, 2.0 * anchor.pump_nm);
  if (!(std::abs(after) < kDeltaKTolerance))
    throw Error(ErrorCode::no_convergence,
                "offset calibration left residual " + fmt_double(after) + " rad/um");
  out.calibrated = true;
  return out;
}

std::vector<TuningPoint> tuning_curve(const QpmConfig& cfg_in, const DispersionModel& model,
                                      const TemperatureRange& range,
                                      double degeneracy_tolerance_nm) {
  cfg_in.validate();
  require(range.step_c > 0.0 && range.stop_c >= range.start_c, ErrorCode::invalid_argument,
          "temperature range must be increasing with a positive step");
  require(range.start_c >= -50.0 && range.stop_c <= 300.0, ErrorCode::out_of_range,
          "temperature range outside model validity");

  // Both photons inside the dispersion range.
  const double lo_nm =
      std::max(kMinWavelengthNm, slaved_wavelength(cfg_in.pump_nm, kMaxWavelengthNm)) + 1e-6;
  const double hi_nm = kMaxWavelengthNm - 1e-6;
  require(lo_nm < hi_nm, ErrorCode::out_of_range, "pump wavelength leaves no valid signal range");
  constexpr int kScan = 800;

  std::vector<TuningPoint> out;
  const auto n_steps =
      static_cast<long>(std::floor((range.stop_c - range.start_c) / range.step_c + 1e-9));
  for (long k = 0; k <= n_steps; ++k) {
    QpmConfig cfg = cfg_in;
    cfg.temperature_c = range.start_c + static_cast<double>(k) * range.step_c;
    auto f = [&](double ls) { return delta_k(cfg, model, ls); };

    double prev_x = lo_nm;
    double prev_f = f(prev_x);
    for (int i = 1; i <= kScan; ++i) {
      const double x = lo_nm + (hi_nm - lo_nm) * i / kScan;
      const double fx = f(x);
      if (prev_f == 0.0 || (prev_f > 0.0) != (fx > 0.0)) {
        double a = prev_x;
        double b = x;
        double fa = prev_f;
        double root = a;
        if (fa != 0.0) {
          for (int it = 0; it < 200; ++it) {
            root = 0.5 * (a + b);
            const double fr = f(root);
            if (std::abs(fr) < kDeltaKTolerance || b - a < 1e-12) break;
            if ((fr > 0.0) == (fa > 0.0)) {
              a = root;
              fa = fr;
            } else {
              b = root;
            }
          }
        }
        TuningPoint pt;
        pt.temperature_c = cfg.temperature_c;
        pt.signal_nm = root;
        pt.idler_nm = slaved_wavelength(cfg.pump_nm, root);
        pt.slope = delta_k_signal_slope(cfg, model, root);
        pt.degenerate = std::abs(pt.signal_nm - pt.idler_nm) <= degeneracy_tolerance_nm;
        out.push_back(pt);
      }
      prev_x = x;
      prev_f = fx;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum

double FilterSpec::transmission(double lambda_nm) const {
  const double d = lambda_nm - center_nm;
  if (shape == FilterShape::flat_top) return std::abs(d) <= 0.5 * fwhm_nm ? 1.0 : 0.0;
  return std::exp(-4.0 * std::numbers::ln2 * d * d / (fwhm_nm * fwhm_nm));
}

double EmissionSpectrum::sideband_fraction() const {
  double s = 0.0;
  for (std::size_t i = 1; i < branches.size(); ++i) s += branches[i].weight;
  return s;
}

EmissionSpectrum build_spectrum(double primary_fwhm_nm, double sideband_fraction,
                                std::pair<double, double> branch2_centers_nm,
                                double degenerate_center_nm, LineShape shape) {
  require(std::isfinite(primary_fwhm_nm) && primary_fwhm_nm > 0.0, ErrorCode::invalid_argument,
          "spectral width must be positive");
  require(sideband_fraction >= 0.0 && sideband_fraction <= 1.0, ErrorCode::out_of_range,
          "sideband fraction must lie in [0, 1]");
  require(degenerate_center_nm > 0.0, ErrorCode::invalid_argument,
          "degenerate center must be positive");

  EmissionSpectrum s;
  s.pump_nm = degenerate_center_nm / 2.0;
  s.branches.push_back({degenerate_center_nm, degenerate_center_nm, primary_fwhm_nm,
                        1.0 - sideband_fraction, shape});
  if (sideband_fraction > 0.0) {
    const auto [h, v] = branch2_centers_nm;
    const double mismatch = std::abs(1.0 / h + 1.0 / v - 1.0 / s.pump_nm);
    require(mismatch <= 1e-6, ErrorCode::invalid_argument,
            "sideband centers violate energy conservation by " + fmt_double(mismatch) + " 1/nm");
    s.branches.push_back({h, v, primary_fwhm_nm, sideband_fraction, shape});
  }
  return s;
}

double branch_pair_transmission(const SpectralBranch& branch, double pump_nm,
                                const std::vector<FilterSpec>& filters) {
  if (filters.empty()) return 1.0;
  return filtered_integral(branch, pump_nm, filters) / branch_norm(branch);
}

FilterResult apply_filter(const EmissionSpectrum& spectrum, const FilterSpec& filter) {
  require(std::isfinite(filter.fwhm_nm) && filter.fwhm_nm > 0.0, ErrorCode::invalid_argument,
          "filter FWHM must be positive");
  require(!spectrum.branches.empty(), ErrorCode::invalid_argument, "empty spectrum");
  const bool near = std::any_of(spectrum.branches.begin(), spectrum.branches.end(),
                                [&](const SpectralBranch& b) {
                                  return std::abs(filter.center_nm - b.center_h_nm) <= 10.0 ||
                                         std::abs(filter.center_nm - b.center_v_nm) <= 10.0;
                                });
  require(near, ErrorCode::out_of_range, "filter center must lie within 10 nm of the spectrum");

  std::vector<FilterSpec> next = spectrum.filters;
  next.push_back(filter);

  FilterResult r;
  r.spectrum = spectrum;
  r.spectrum.filters = next;
  double total = 0.0;
  for (auto& b : r.spectrum.branches) {
    const double denom = spectrum.filters.empty()
                             ? branch_norm(b)
                             : filtered_integral(b, spectrum.pump_nm, spectrum.filters);
    const double after = filtered_integral(b, spectrum.pump_nm, next);
    const double t = denom > 0.0 ? after / denom : 0.0;
    b.weight *= t;
    total += b.weight;
  }
  if (!(total > 1e-300))
    throw Error(ErrorCode::no_signal, "filter does not overlap spectrum");
  for (auto& b : r.spectrum.branches) b.weight /= total;
  r.transmitted_fraction = std::min(1.0, total);
  r.post_filter_sideband_fraction = r.spectrum.sideband_fraction();
  return r;
}

std::vector<double> marginal_density(const EmissionSpectrum& spectrum, Polarization pol,
                                     std::span<const double> lambdas_nm) {
  std::vector<double> norms;
  for (const auto& b : spectrum.branches)
    norms.push_back(b.weight <= 0.0 ? 0.0
                    : spectrum.filters.empty()
                        ? branch_norm(b)
                        : filtered_integral(b, spectrum.pump_nm, spectrum.filters));
  std::vector<double> out;
  out.reserve(lambdas_nm.size());
  for (const double lambda_nm : lambdas_nm) {
    if (lambda_nm <= spectrum.pump_nm) {
      out.push_back(0.0);
      continue;
    }
    double lh = lambda_nm;
    double jacobian = 1.0;
    if (pol == Polarization::V) {
      lh = slaved_wavelength(spectrum.pump_nm, lambda_nm);
      jacobian = (lh * lh) / (lambda_nm * lambda_nm);
    }
    const double lv = slaved_wavelength(spectrum.pump_nm, lh);
    double density = 0.0;
    for (std::size_t i = 0; i < spectrum.branches.size(); ++i) {
      const auto& b = spectrum.branches[i];
      if (norms[i] <= 0.0) continue;
      const double x = lh - b.center_h_nm;
      density += b.weight * line_profile(b.shape, x, b.fwhm_nm) *
                 filters_product(spectrum.filters, lh, lv) / norms[i];
    }
    out.push_back(density * jacobian);
  }
  return out;
}

double marginal_density(const EmissionSpectrum& spectrum, Polarization pol, double lambda_nm) {
  return marginal_density(spectrum, pol, std::span<const double>(&lambda_nm, 1)).front();
}

double coherence_time(double lambda_nm, double delta_lambda_fwhm_nm) {
  require(lambda_nm > 0.0 && delta_lambda_fwhm_nm > 0.0, ErrorCode::invalid_argument,
          "wavelength and bandwidth must be positive");
  // nm^2 / nm -> nm; 1e-9 m per nm, 1e12 ps per s.
  return 0.44 * lambda_nm * lambda_nm / delta_lambda_fwhm_nm * 1e3 / kSpeedOfLight;
}

double bandwidth_ghz(double lambda_nm, double delta_lambda_nm) {
  require(lambda_nm > 0.0 && delta_lambda_nm >= 0.0, ErrorCode::invalid_argument,
          "wavelength must be positive and bandwidth non-negative");
  return kSpeedOfLight * delta_lambda_nm / (lambda_nm * lambda_nm);
}

}  // namespace ppln::spdc
