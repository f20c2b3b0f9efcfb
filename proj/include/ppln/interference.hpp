#pragma once

// Analytic two-photon interference: the HOM-type dip seen at one analyzer when
// the pair is not separated, Bell fringes when it is, and CHSH extraction.

#include "ppln/optics.hpp"

#include <array>
#include <span>
#include <vector>

namespace ppln::interference {

enum class WavepacketShape { gaussian };

struct Wavepacket {
  double coherence_time_fwhm_ps = 5.0;
  WavepacketShape shape = WavepacketShape::gaussian;

  void validate() const;
};

// Normalized intensity overlap of two identical wavepackets offset by `delay`:
// exp(-2 ln2 tau^2 / tau_coh^2). Its FWHM is sqrt(2) tau_coh.
double mode_overlap(const Wavepacket& wp, double delay_ps);

// Coincidence probability between the two PBS outputs of one analyzer (effective
// polarizer angle alpha) for the input |H,V>, intensity overlap m and
// indistinguishability ceiling v0.
double hom_coincidence(double alpha_deg, double m, double v0);

struct HomScan {
  std::vector<double> delays_ps;
  std::vector<double> coincidence_probability;
  double dip_center_ps = 0.0;
  double visibility_true = 0.0;
};

// D/A analyzer (alpha = 45 deg): P(tau) = (1 - v0 m(tau - center)) / 2.
HomScan hom_scan(const Wavepacket& wp, std::span<const double> delays_ps, double v0,
                 double dip_center_ps = 0.0);

double hom_dip_fwhm(const Wavepacket& wp);
// FWHM of the sampled dip, from linear interpolation of the half-depth crossings.
double measure_dip_fwhm(const HomScan& scan);

enum class Basis { HV, DA };
const char* to_string(Basis b);

struct BellScan {
  double alice_hwp_deg = 0.0;
  std::vector<double> bob_hwp_deg;
  std::vector<double> coincidence_probability;
  Basis basis_tag = Basis::HV;
};

BellScan bell_scan(double state_coherence, double phi_rad, double alice_hwp_deg,
                   std::span<const double> bob_hwp_deg);

// (max - min) / (max + min) of a sampled fringe.
double fringe_visibility(std::span<const double> values);

// Soleil-Babinet phase in [0, 2 pi) cancelling phi_a + phi_b, found by scanning
// the D/A coincidence visibility as an experimenter would.
double sb_balance(double phi_a_rad, double phi_b_rad);

// D/A fringe visibility (signed) of make_psi_state(C, phi_a + phi_b) after the
// Soleil-Babinet on Alice's channel.
double da_visibility(double coherence, double phi_total_rad, double sb_phase_rad);

// Rates at (a, b), (a, b_perp), (a_perp, b), (a_perp, b_perp).
struct CoincidenceQuad {
  double r_ab = 0.0;
  double r_ab_perp = 0.0;
  double r_aperp_b = 0.0;
  double r_aperp_bperp = 0.0;
};

double correlation_E(const CoincidenceQuad& rates);
// Poisson standard error of E when the rates were integrated for `seconds`.
double correlation_E_error(const CoincidenceQuad& rates, double seconds);

// Effective polarizer angles in degrees.
struct ChshSettings {
  double a = 0.0;
  double a_prime = 45.0;
  double b = 22.5;
  double b_prime = 67.5;
};

struct ChshResult {
  double S = 0.0;
  double std_error = 0.0;
  // (S - 2) / std_error; +inf when std_error is zero.
  double n_sigma_violation = 0.0;
};

inline constexpr double kTsirelsonBound = 2.8284271247461903;

// E values ordered E(a,b), E(a,b'), E(a',b), E(a',b'); optional matching
// independent standard errors.
ChshResult chsh_S(std::span<const double> e_values, std::span<const double> e_errors = {});

// Noise-free S of a state at the given settings.
ChshResult chsh_from_state(const optics::TwoPhotonDensityMatrix& rho,
                           const ChshSettings& settings = {});

// Residual compensator offset for the separated-pair configuration: the
// mirror sits midway between the two users' dip centers.
double compensator_setpoint(double dip_center_a_ps, double dip_center_b_ps);

// Bell-state coherence: spectral ceiling times the temporal overlap at the set point.
double bell_coherence(const Wavepacket& wp, double v0, double residual_delay_ps);

}  // namespace ppln::interference
