#include "ppln/interference.hpp"

#include "ppln/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ppln::interference {

namespace {

void check_unit_interval(double x, const char* what) {
  require(std::isfinite(x) && x >= 0.0 && x <= 1.0, ErrorCode::out_of_range,
          std::string(what) + " must lie in [0, 1]");
}

double wrap_two_pi(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(x, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi - 1e-12) r = 0.0;
  return r;
}

}  // namespace

void Wavepacket::validate() const {
  require(std::isfinite(coherence_time_fwhm_ps) && coherence_time_fwhm_ps > 0.0,
          ErrorCode::invalid_argument, "coherence time must be positive");
}

double mode_overlap(const Wavepacket& wp, double delay_ps) {
  wp.validate();
  const double t = delay_ps / wp.coherence_time_fwhm_ps;
  return std::exp(-2.0 * std::numbers::ln2 * t * t);
}

double hom_coincidence(double alpha_deg, double m, double v0) {
  check_unit_interval(m, "mode overlap");
  check_unit_interval(v0, "indistinguishability");
  const double a = optics::deg_to_rad(alpha_deg);
  const double c2 = std::cos(a) * std::cos(a);
  const double s2 = std::sin(a) * std::sin(a);
  const double cos2a = std::cos(2.0 * a);
  const double k = v0 * m;
  return (1.0 - k) * (c2 * c2 + s2 * s2) + k * cos2a * cos2a;
}

HomScan hom_scan(const Wavepacket& wp, std::span<const double> delays_ps, double v0,
                 double dip_center_ps) {
  wp.validate();
  check_unit_interval(v0, "indistinguishability");
  require(!delays_ps.empty(), ErrorCode::invalid_argument, "HOM scan needs at least one delay");
  HomScan scan;
  scan.dip_center_ps = dip_center_ps;
  scan.visibility_true = v0;
  scan.delays_ps.assign(delays_ps.begin(), delays_ps.end());
  scan.coincidence_probability.reserve(delays_ps.size());
  for (double tau : delays_ps)
    scan.coincidence_probability.push_back(
        hom_coincidence(45.0, mode_overlap(wp, tau - dip_center_ps), v0));
  return scan;
}

double hom_dip_fwhm(const Wavepacket& wp) {
  wp.validate();
  return std::numbers::sqrt2 * wp.coherence_time_fwhm_ps;
}

double measure_dip_fwhm(const HomScan& scan) {
  const auto& x = scan.delays_ps;
  const auto& y = scan.coincidence_probability;
  require(x.size() >= 3 && x.size() == y.size(), ErrorCode::invalid_argument,
          "dip width needs at least three samples");
  require(std::is_sorted(x.begin(), x.end()), ErrorCode::invalid_argument,
          "delays must be increasing");
  const auto min_it = std::min_element(y.begin(), y.end());
  const auto i_min = static_cast<std::size_t>(min_it - y.begin());
  const double baseline = std::max(y.front(), y.back());
  const double half = 0.5 * (baseline + *min_it);
  require(baseline > *min_it, ErrorCode::no_signal, "no dip detected");

  auto crossing = [&](std::size_t i, std::size_t j) {
    // y[i] >= half > y[j] or the reverse; linear interpolation.
    const double t = (half - y[i]) / (y[j] - y[i]);
    return x[i] + t * (x[j] - x[i]);
  };
  std::size_t l = i_min;
  while (l > 0 && y[l] < half) --l;
  std::size_t r = i_min;
  while (r + 1 < y.size() && y[r] < half) ++r;
  require(y[l] >= half && y[r] >= half, ErrorCode::no_signal,
          "scan does not reach the half-depth level on both sides");
  return crossing(r - 1, r) - crossing(l, l + 1);
}

const char* to_string(Basis b) { return b == Basis::HV ? "HV" : "DA"; }

BellScan bell_scan(double state_coherence, double phi_rad, double alice_hwp_deg,
                   std::span<const double> bob_hwp_deg) {
  const auto rho = optics::make_psi_state(state_coherence, phi_rad);
  BellScan scan;
  scan.alice_hwp_deg = alice_hwp_deg;
  // HWP at 0 or 45 deg projects on H/V; 22.5 or 67.5 deg on D/A.
  const double r = std::fmod(std::abs(alice_hwp_deg), 45.0);
  scan.basis_tag = (std::min(r, 45.0 - r) < 11.25) ? Basis::HV : Basis::DA;
  scan.bob_hwp_deg.assign(bob_hwp_deg.begin(), bob_hwp_deg.end());
  scan.coincidence_probability.reserve(bob_hwp_deg.size());
  const double alpha = 2.0 * alice_hwp_deg;
  for (double theta_b : bob_hwp_deg)
    scan.coincidence_probability.push_back(optics::coincidence_prob(rho, alpha, 2.0 * theta_b));
  return scan;
}

double fringe_visibility(std::span<const double> values) {
  require(!values.empty(), ErrorCode::invalid_argument, "empty fringe");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  require(*mx + *mn > 0.0, ErrorCode::no_signal, "fringe has no signal");
  return (*mx - *mn) / (*mx + *mn);
}

double da_visibility(double coherence, double phi_total_rad, double sb_phase_rad) {
  const auto rho = optics::apply_local(optics::make_psi_state(coherence, phi_total_rad),
                                       optics::sb_matrix(sb_phase_rad),
                                       optics::JonesMatrix::identity());
  // Bob's analyzer along D and along A with Alice fixed on D.
  const double p_dd = optics::coincidence_prob(rho, 45.0, 45.0);
  const double p_da = optics::coincidence_prob(rho, 45.0, 135.0);
  return (p_dd - p_da) / (p_dd + p_da);
}

double sb_balance(double phi_a_rad, double phi_b_rad) {
  require(std::isfinite(phi_a_rad) && std::isfinite(phi_b_rad), ErrorCode::invalid_argument,
          "channel phases must be finite");
  const double phi = phi_a_rad + phi_b_rad;
  // Unit coherence: the optimum does not depend on C.
  auto objective = [&](double sb) { return da_visibility(1.0, phi, sb); };

  constexpr int kCoarse = 720;
  const double step = 2.0 * std::numbers::pi / kCoarse;
  double best_x = 0.0;
  double best_f = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kCoarse; ++i) {
    const double x = i * step;
    const double f = objective(x);
    if (f > best_f) {
      best_f = f;
      best_x = x;
    }
  }
  // Golden-section refinement of the maximum.
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best_x - step;
  double b = best_x + step;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = objective(d);
    }
  }
  return wrap_two_pi(0.5 * (a + b));
}

double correlation_E(const CoincidenceQuad& r) {
  require(r.r_ab >= 0.0 && r.r_ab_perp >= 0.0 && r.r_aperp_b >= 0.0 && r.r_aperp_bperp >= 0.0,
          ErrorCode::invalid_argument, "coincidence rates must be non-negative");
  const double sum = r.r_ab + r.r_ab_perp + r.r_aperp_b + r.r_aperp_bperp;
  require(sum > 0.0, ErrorCode::no_signal, "all coincidence rates are zero");
  return (r.r_ab + r.r_aperp_bperp - r.r_ab_perp - r.r_aperp_b) / sum;
}

double correlation_E_error(const CoincidenceQuad& r, double seconds) {
  require(seconds > 0.0, ErrorCode::invalid_argument, "integration time must be positive");
  const double e = correlation_E(r);
  const double n = (r.r_ab + r.r_ab_perp + r.r_aperp_b + r.r_aperp_bperp) * seconds;
  // dE/dN_i = (s_i - E) / N with s_i = +1 for ab and a'b', -1 otherwise; Var N_i = N_i.
  const double var = (std::pow(1.0 - e, 2) * (r.r_ab + r.r_aperp_bperp) +
                      std::pow(1.0 + e, 2) * (r.r_ab_perp + r.r_aperp_b)) *
                     seconds / (n * n);
  return std::sqrt(var);
}

ChshResult chsh_S(std::span<const double> e_values, std::span<const double> e_errors) {
  require(e_values.size() == 4, ErrorCode::invalid_argument,
          "CHSH needs exactly four correlation values");
  require(e_errors.empty() || e_errors.size() == 4, ErrorCode::invalid_argument,
          "CHSH error list must match the four correlation values");
  for (double e : e_values)
    require(std::isfinite(e) && std::abs(e) <= 1.0 + 1e-12, ErrorCode::out_of_range,
            "correlation values must lie in [-1, 1]");
  ChshResult r;
  const double left = e_values[0] - e_values[1];
  const double right = e_values[2] + e_values[3];
  r.S = std::abs(left) + std::abs(right);
  double var = 0.0;
  for (double s : e_errors) var += s * s;
  r.std_error = std::sqrt(var);
  r.n_sigma_violation = r.std_error > 0.0 ? (r.S - 2.0) / r.std_error
                                          : std::numeric_limits<double>::infinity();
  return r;
}

ChshResult chsh_from_state(const optics::TwoPhotonDensityMatrix& rho, const ChshSettings& s) {
  auto e = [&](double a, double b) {
    CoincidenceQuad q;
    q.r_ab = optics::coincidence_prob(rho, a, b);
    q.r_ab_perp = optics::coincidence_prob(rho, a, b + 90.0);
    q.r_aperp_b = optics::coincidence_prob(rho, a + 90.0, b);
    q.r_aperp_bperp = optics::coincidence_prob(rho, a + 90.0, b + 90.0);
    return correlation_E(q);
  };
  const std::array<double, 4> values{e(s.a, s.b), e(s.a, s.b_prime), e(s.a_prime, s.b),
                                     e(s.a_prime, s.b_prime)};
  return chsh_S(values);
}

double compensator_setpoint(double dip_center_a_ps, double dip_center_b_ps) {
  return 0.5 * (dip_center_a_ps + dip_center_b_ps);
}

double bell_coherence(const Wavepacket& wp, double v0, double residual_delay_ps) {
  check_unit_interval(v0, "indistinguishability");
  return v0 * mode_overlap(wp, residual_delay_ps);
}

}  // namespace ppln::interference
