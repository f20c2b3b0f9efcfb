#include "oracles/oracles.hpp"
#include "ppln/error.hpp"
#include "ppln/interference.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace ppln::interference;
using ppln::optics::make_psi_state;

namespace {

std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("mode overlap") {
  const Wavepacket wp{5.03};
  CHECK(mode_overlap(wp, 0.0) == 1.0);
  for (double t : {0.5, 2.0, 7.0}) CHECK(mode_overlap(wp, t) == mode_overlap(wp, -t));
  CHECK(hom_dip_fwhm(wp) == doctest::Approx(7.11).epsilon(0.001));
  CHECK(mode_overlap(wp, hom_dip_fwhm(wp) / 2.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(mode_overlap(Wavepacket{0.0}, 1.0), ppln::Error);
}

TEST_CASE("mode overlap equals a numerical convolution of the envelopes") {
  for (double tc : {1.0, 5.03, 20.0})
    for (double t : {0.0, 0.3, 1.0, 2.5, 6.0, 15.0}) {
      const double tau = t * tc / 5.0;
      CHECK(std::abs(mode_overlap(Wavepacket{tc}, tau) - oracle::convolved_overlap(tc, tau)) < 1e-6);
    }
}

TEST_CASE("hom_coincidence examples") {
  for (double m : {0.0, 0.3, 1.0}) CHECK(hom_coincidence(0.0, m, 1.0) == doctest::Approx(1.0));
  CHECK(hom_coincidence(45.0, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(hom_coincidence(45.0, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(hom_coincidence(45.0, 1.2, 1.0), ppln::Error);
  CHECK_THROWS_AS(hom_coincidence(45.0, 0.5, -0.1), ppln::Error);
}

TEST_CASE("property: HOM formula against four-amplitude enumeration") {
  for (double alpha : {0.0, 10.0, 22.5, 45.0, 70.0})
    for (double m : {0.0, 0.5, 1.0})
      for (double v0 : {0.85, 1.0})
        CHECK(std::abs(hom_coincidence(alpha, m, v0) - oracle::hom_enumeration(alpha, v0 * m)) < 1e-10);
  for (double m : {0.0, 0.2, 0.9})
    CHECK(hom_coincidence(45.0, m, 0.9) == doctest::Approx(0.5 * (1.0 - 0.9 * m)).epsilon(1e-15));
}

TEST_CASE("hom scan") {
  const Wavepacket wp{5.03};
  const auto delays = grid(-20.0, 20.0, 4001);
  const auto scan = hom_scan(wp, delays, 1.0);
  CHECK(scan.visibility_true == 1.0);
  CHECK(measure_dip_fwhm(scan) == doctest::Approx(7.11).epsilon(0.001));
  CHECK(std::abs(measure_dip_fwhm(scan) - std::sqrt(2.0) * 5.03) < 1e-3);
  for (double p : scan.coincidence_probability) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  const auto far = hom_scan(wp, std::vector<double>{-1e3, 1e3}, 1.0);
  CHECK(far.coincidence_probability[0] == doctest::Approx(0.5));

  const auto polluted = hom_scan(wp, std::vector<double>{0.0}, 0.85);
  CHECK(polluted.coincidence_probability[0] == doctest::Approx(0.075));

  const auto shifted = hom_scan(wp, delays, 1.0, 3.0);
  std::size_t imin = 0;
  for (std::size_t i = 0; i < delays.size(); ++i)
    if (shifted.coincidence_probability[i] < shifted.coincidence_probability[imin]) imin = i;
  CHECK(delays[imin] == doctest::Approx(3.0));
}

TEST_CASE("property: dip FWHM over coherence time is sqrt 2") {
  for (double tc : {1.0, 5.03, 20.0}) {
    CHECK(hom_dip_fwhm(Wavepacket{tc}) / tc == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    const auto scan = hom_scan(Wavepacket{tc}, grid(-4 * tc, 4 * tc, 8001), 1.0);
    CHECK(measure_dip_fwhm(scan) / tc == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  }
  CHECK(hom_dip_fwhm(Wavepacket{5.2}) == doctest::Approx(7.35).epsilon(0.001));
  CHECK(std::abs(hom_dip_fwhm(Wavepacket{5.2}) - 7.45) / 7.45 < 0.02);
}

TEST_CASE("bell scan") {
  const auto bobs = grid(0.0, 90.0, 181);
  const auto hv = bell_scan(1.0, 0.0, 0.0, bobs);
  CHECK(hv.basis_tag == Basis::HV);
  CHECK(fringe_visibility(hv.coincidence_probability) == doctest::Approx(1.0));

  const auto da = bell_scan(1.0, 0.0, 22.5, std::vector<double>{22.5});
  CHECK(da.basis_tag == Basis::DA);
  CHECK(da.coincidence_probability[0] == doctest::Approx(0.5));

  const auto plus = bell_scan(1.0, 0.0, 22.5, bobs);
  const auto minus = bell_scan(1.0, oracle::kPi, 22.5, bobs);
  for (std::size_t i = 0; i < bobs.size(); ++i)
    CHECK(plus.coincidence_probability[i] + minus.coincidence_probability[i] == doctest::Approx(0.5));

  const auto c99 = bell_scan(0.99, 0.0, 22.5, bobs);
  CHECK(fringe_visibility(c99.coincidence_probability) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(to_string(Basis::DA) == std::string("DA"));
  CHECK_THROWS_AS(bell_scan(1.5, 0.0, 0.0, bobs), ppln::Error);
}

TEST_CASE("property: fringe visibilities per basis") {
  const auto bobs = grid(0.0, 90.0, 721);
  for (double c : {0.0, 0.3, 0.85, 1.0})
    for (double phi : {0.0, 0.4, 2.0, oracle::kPi}) {
      CHECK(fringe_visibility(bell_scan(c, phi, 0.0, bobs).coincidence_probability) ==
            doctest::Approx(1.0).epsilon(1e-9));
      const double da = fringe_visibility(bell_scan(c, phi, 22.5, bobs).coincidence_probability);
      CHECK(da == doctest::Approx(c * std::abs(std::cos(phi))).epsilon(1e-9));
    }
}

TEST_CASE("property: Bell probabilities against amplitude enumeration") {
  const std::vector<double> angles{0.0, 13.0, 22.5, 45.0, 80.0};
  for (double c : {0.0, 0.85, 1.0})
    for (double phi : {0.0, 1.0, oracle::kPi})
      for (double ta : angles) {
        const auto scan = bell_scan(c, phi, ta, angles);
        for (std::size_t i = 0; i < angles.size(); ++i)
          CHECK(std::abs(scan.coincidence_probability[i] -
                         oracle::bell_enumeration(c, phi, 2 * ta, 2 * angles[i])) < 1e-10);
      }
}

TEST_CASE("Soleil-Babinet balancing") {
  const double sb0 = sb_balance(0.0, 0.0);
  CHECK(std::min(std::abs(sb0), std::abs(sb0 - oracle::kPi)) < 1e-6);
  CHECK(std::abs(sb0 - 2 * oracle::kPi) > 1e-9);

  const double sb = sb_balance(0.3, 0.4);
  CHECK(sb >= 0.0);
  CHECK(sb < 2 * oracle::kPi);
  CHECK(std::remainder(sb - (oracle::kPi - 0.7), oracle::kPi) == doctest::Approx(0.0).epsilon(1e-6));

  for (double c : {0.5, 0.99})
    for (auto phis : {std::pair{0.4, 1.1}, std::pair{2.0, -0.3}}) {
      const double s = sb_balance(phis.first, phis.second);
      CHECK(std::abs(da_visibility(c, phis.first + phis.second, s)) == doctest::Approx(c).epsilon(1e-6));
    }
}

TEST_CASE("correlation E") {
  CHECK(correlation_E({1.0, 0.0, 0.0, 1.0}) == 1.0);
  CHECK(correlation_E({1.0, 1.0, 1.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(correlation_E({0.0, 0.0, 0.0, 0.0}), ppln::Error);
  CHECK_THROWS_AS(correlation_E({1.0, -1.0, 0.0, 0.0}), ppln::Error);

  // Psi+ at polarizer angles 0 and 45: rates from the closed-form fringe.
  const double a = 0.0, b = 45.0;
  const CoincidenceQuad q{oracle::bell_enumeration(1, 0, a, b), oracle::bell_enumeration(1, 0, a, b + 90),
                          oracle::bell_enumeration(1, 0, a + 90, b),
                          oracle::bell_enumeration(1, 0, a + 90, b + 90)};
  // E(a, b) = -cos(2(a + b)) for this state.
  CHECK(correlation_E(q) == doctest::Approx(-std::cos(oracle::rad(2 * (a + b)))).epsilon(1e-12));

  // Poisson error of E from counts N_i = R_i t.
  const CoincidenceQuad r{400.0, 50.0, 60.0, 390.0};
  const double t = 60.0;
  const double n = (r.r_ab + r.r_ab_perp + r.r_aperp_b + r.r_aperp_bperp) * t;
  const double e = correlation_E(r);
  CHECK(correlation_E_error(r, t) == doctest::Approx(std::sqrt((1.0 - e * e) / n)).epsilon(1e-12));
}

TEST_CASE("CHSH") {
  const std::vector<double> ideal{-1 / std::sqrt(2.0), 1 / std::sqrt(2.0), -1 / std::sqrt(2.0),
                                  -1 / std::sqrt(2.0)};
  CHECK(chsh_S(ideal).S == doctest::Approx(kTsirelsonBound));
  CHECK(std::isinf(chsh_S(ideal).n_sigma_violation));
  const std::vector<double> errs{0.01, 0.01, 0.01, 0.01};
  const auto r = chsh_S(ideal, errs);
  CHECK(r.std_error == doctest::Approx(0.02));
  CHECK(r.n_sigma_violation == doctest::Approx((kTsirelsonBound - 2.0) / 0.02));
  CHECK_THROWS_AS(chsh_S(std::vector<double>{0.1, 0.2, 0.3}), ppln::Error);

  CHECK(chsh_from_state(make_psi_state(1.0, 0.0)).S == doctest::Approx(kTsirelsonBound).epsilon(1e-12));

  // Sinusoidal fringes of common visibility V: E = -V cos(2(a + b)), S = 2 sqrt(2) V.
  auto uniform = [](double v) {
    const ChshSettings st;
    std::vector<double> e;
    for (auto [x, y] : {std::pair{st.a, st.b}, std::pair{st.a, st.b_prime}, std::pair{st.a_prime, st.b},
                        std::pair{st.a_prime, st.b_prime}})
      e.push_back(-v * std::cos(oracle::rad(2 * (x + y))));
    return chsh_S(e).S;
  };
  CHECK(uniform(1.0) == doctest::Approx(kTsirelsonBound));
  CHECK(uniform(0.99) == doctest::Approx(2.80).epsilon(0.001));
  CHECK(uniform(0.83) == doctest::Approx(2.35).epsilon(0.001));
  CHECK(uniform(0.83) > 2.0);
  CHECK((uniform(0.70) > 2.0) == false);
  CHECK(uniform(0.71) > 2.0);
}

namespace {

// S of the state at canonical settings, with every E built from enumerated amplitudes.
double enumerated_S(double c, double phi) {
  const ChshSettings st;
  auto e = [&](double a, double b) {
    const double pp = oracle::bell_enumeration(c, phi, a, b);
    const double pm = oracle::bell_enumeration(c, phi, a, b + 90);
    const double mp = oracle::bell_enumeration(c, phi, a + 90, b);
    const double mm = oracle::bell_enumeration(c, phi, a + 90, b + 90);
    return (pp + mm - pm - mp) / (pp + mm + pm + mp);
  };
  return std::abs(e(st.a, st.b) - e(st.a, st.b_prime)) + std::abs(e(st.a_prime, st.b) + e(st.a_prime, st.b_prime));
}

}  // namespace

TEST_CASE("property: CHSH bound and agreement with enumeration") {
  for (double c = 0.0; c <= 1.0; c += 0.05)
    for (double phi : {0.0, 0.7, 2.5}) {
      const double s = chsh_from_state(make_psi_state(c, phi)).S;
      CHECK(std::abs(s) <= kTsirelsonBound + 1e-9);
      CHECK(std::abs(s - enumerated_S(c, phi)) < 1e-10);
    }
  // The H/V fringe keeps unit visibility, so only the D/A pair scales with C.
  for (double c : {0.0, 0.3, 0.5, 0.9})
    CHECK(chsh_from_state(make_psi_state(c, 0.0)).S == doctest::Approx(std::sqrt(2.0) * (1.0 + c)).epsilon(1e-12));
}

TEST_CASE("compensator setpoint and Bell coherence") {
  CHECK(compensator_setpoint(0.0, 0.0) == 0.0);
  CHECK(compensator_setpoint(-1.0, 3.0) == 1.0);
  const Wavepacket wp{5.03};
  CHECK(bell_coherence(wp, 0.99, 0.0) == doctest::Approx(0.99));
  CHECK(bell_coherence(wp, 1.0, 2.0) == doctest::Approx(mode_overlap(wp, 2.0)));
}
