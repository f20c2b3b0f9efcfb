#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library; they restate the physics with plain loops.

#include <array>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLn2 = 0.69314718055994530942;

inline double rad(double deg) { return deg * kPi / 180.0; }

// Edwards-Lawrence index with an additive offset.
struct Sellmeier {
  double a1, a2, a3, a4, b1, b2, b3, t0;
};

inline double sellmeier_index(const Sellmeier& c, double lambda_nm, double t_c, double offset) {
  const double l = lambda_nm / 1000.0;
  const double f = (t_c - c.t0) * (t_c + c.t0 + 546.0);
  const double d = c.a3 + c.b2 * f;
  return std::sqrt(c.a1 + (c.a2 + c.b1 * f) / (l * l - d * d) + c.b3 * f - c.a4 * l * l) + offset;
}

// Bulk congruent LiNbO3 values as shipped in data/linbo3_congruent.disp.
inline constexpr Sellmeier kOrdinary{4.9048, 0.11775, 0.21802, 0.027153,
                                     2.2314e-8, -2.9671e-8, 2.1429e-8, 24.5};
inline constexpr Sellmeier kExtraordinary{4.5820, 0.099169, 0.21090, 0.021940,
                                          5.2716e-8, -4.9143e-8, 2.2971e-7, 24.5};

// Degenerate type-II mismatch (H pump, H signal, V idler) in rad/um.
inline double degenerate_delta_k(double pump_nm, double t_c, double period_um, double off_h,
                                 double off_v) {
  const double ls = 2.0 * pump_nm;
  const double np = sellmeier_index(kOrdinary, pump_nm, t_c, off_h);
  const double ns = sellmeier_index(kOrdinary, ls, t_c, off_h);
  const double ni = sellmeier_index(kExtraordinary, ls, t_c, off_v);
  return 2.0 * kPi * (np / (pump_nm / 1000.0) - ns / (ls / 1000.0) - ni / (ls / 1000.0) -
                      1.0 / period_um);
}

// Period zeroing degenerate_delta_k, solved in closed form since the
// mismatch is affine in 1/period.
inline double degenerate_period(double pump_nm, double t_c, double off_h, double off_v) {
  const double bulk = degenerate_delta_k(pump_nm, t_c, 1e300, off_h, off_v) / (2.0 * kPi);
  return 1.0 / bulk;
}

// Pair transmission of one Gaussian line through Gaussian filters acting on
// both photons, by a midpoint Riemann sum along the energy-conservation line.
inline double riemann_pair_transmission(double center_h, double fwhm, double pump_nm,
                                        double filter_center, double filter_fwhm, int n = 200000) {
  auto g = [](double x, double w) { return std::exp(-4.0 * kLn2 * x * x / (w * w)); };
  const double lo = center_h - 8.0 * fwhm;
  const double hi = center_h + 8.0 * fwhm;
  const double dx = (hi - lo) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double lh = lo + (i + 0.5) * dx;
    const double lv = 1.0 / (1.0 / pump_nm - 1.0 / lh);
    const double line = g(lh - center_h, fwhm);
    den += line;
    num += line * g(lh - filter_center, filter_fwhm) * g(lv - filter_center, filter_fwhm);
  }
  return num / den;
}

// Intensity overlap of two Gaussian envelopes (intensity FWHM tau_c) offset
// by tau, from a sampled cross-correlation normalized to its zero-delay value.
inline double convolved_overlap(double tau_c, double tau, int n = 40001) {
  const double sigma = tau_c / (2.0 * std::sqrt(2.0 * kLn2));
  const double half = 12.0 * sigma + std::abs(tau);
  const double dt = 2.0 * half / (n - 1);
  auto env = [&](double t) { return std::exp(-t * t / (2.0 * sigma * sigma)); };
  double at_tau = 0.0, at_zero = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = -half + i * dt;
    at_tau += env(t) * env(t - tau);
    at_zero += env(t) * env(t);
  }
  return at_tau / at_zero;
}

// |H>_1 |V>_2 enter one PBS analyzer at polarizer angle alpha. The partially
// distinguishable fraction adds probabilities; the indistinguishable fraction
// adds the two exchange amplitudes for each pair of output ports.
inline double hom_enumeration(double alpha_deg, double overlap) {
  const double a = rad(alpha_deg);
  // Amplitude for H or V to exit port 0 (transmitted along alpha) or 1.
  const std::array<std::array<double, 2>, 2> amp{{{std::cos(a), -std::sin(a)},
                                                  {std::sin(a), std::cos(a)}}};
  double distinguishable = 0.0, indistinguishable = 0.0;
  // Coincidence: one photon in port 0, the other in port 1.
  const double direct = amp[0][0] * amp[1][1];  // H -> 0, V -> 1
  const double exchange = amp[0][1] * amp[1][0];  // H -> 1, V -> 0
  distinguishable = direct * direct + exchange * exchange;
  indistinguishable = (direct + exchange) * (direct + exchange);
  return (1.0 - overlap) * distinguishable + overlap * indistinguishable;
}

// <alpha, beta| rho |alpha, beta> for the Psi-type state written out as a
// sum over the four two-photon amplitudes.
inline double bell_enumeration(double coherence, double phi, double alpha_deg, double beta_deg) {
  const double ca = std::cos(rad(alpha_deg)), sa = std::sin(rad(alpha_deg));
  const double cb = std::cos(rad(beta_deg)), sb = std::sin(rad(beta_deg));
  // Projections of |HV> and |VH> onto <alpha, beta|.
  const cd hv = ca * sb;
  const cd vh = sa * cb;
  const cd coh = coherence * std::exp(cd(0.0, phi));
  const cd p = 0.5 * (hv * hv + vh * vh) + 0.5 * (hv * vh * std::conj(coh) + vh * hv * coh);
  return p.real();
}

// Window click probabilities for one pair source, every elementary Bernoulli
// event enumerated explicitly. No analyzer: each photon is detected with
// eta_a or eta_b at the detector it reaches.
struct WindowProbabilities {
  double a = 0.0;
  double b = 0.0;
  double both = 0.0;
};

inline WindowProbabilities enumerate_window(double mu, double s, double eta_a, double eta_b,
                                            double dark_a, double dark_b, bool poisson,
                                            int max_pairs = 12) {
  // Per-pair outcome distribution over (clicks A, clicks B).
  double pa_only = 0.0, pb_only = 0.0, pboth = 0.0;
  for (int sep = 0; sep < 2; ++sep)
    for (int side = 0; side < 2; ++side)
      for (int d1 = 0; d1 < 2; ++d1)
        for (int d2 = 0; d2 < 2; ++d2) {
          double w = sep ? s : 1.0 - s;
          bool ca = false, cb = false;
          if (sep) {
            if (side == 1) continue;
            w *= (d1 ? eta_a : 1.0 - eta_a) * (d2 ? eta_b : 1.0 - eta_b);
            ca = d1;
            cb = d2;
          } else {
            w *= 0.5;
            const double eta = side == 0 ? eta_a : eta_b;
            w *= (d1 ? eta : 1.0 - eta) * (d2 ? eta : 1.0 - eta);
            const bool any = d1 || d2;
            (side == 0 ? ca : cb) = any;
          }
          if (ca && cb) pboth += w;
          else if (ca) pa_only += w;
          else if (cb) pb_only += w;
        }

  // Distribution of the pair number.
  std::vector<double> pn;
  if (poisson) {
    double p = std::exp(-mu);
    for (int n = 0; n <= max_pairs; ++n) {
      pn.push_back(p);
      p *= mu / (n + 1);
    }
  } else {
    pn = {1.0 - mu, mu};
  }

  WindowProbabilities out;
  for (std::size_t n = 0; n < pn.size(); ++n) {
    // P(no A from n pairs), P(no B), P(neither).
    const double no_a = std::pow(1.0 - pa_only - pboth, static_cast<double>(n));
    const double no_b = std::pow(1.0 - pb_only - pboth, static_cast<double>(n));
    const double none = std::pow(1.0 - pa_only - pb_only - pboth, static_cast<double>(n));
    for (int da = 0; da < 2; ++da)
      for (int db = 0; db < 2; ++db) {
        const double w = pn[n] * (da ? dark_a : 1.0 - dark_a) * (db ? dark_b : 1.0 - dark_b);
        const double click_a = da ? 1.0 : 1.0 - no_a;
        const double click_b = db ? 1.0 : 1.0 - no_b;
        double click_both;
        if (da && db) click_both = 1.0;
        else if (da) click_both = 1.0 - no_b;
        else if (db) click_both = 1.0 - no_a;
        else click_both = 1.0 - no_a - no_b + none;
        out.a += w * click_a;
        out.b += w * click_b;
        out.both += w * click_both;
      }
  }
  return out;
}

}  // namespace oracle
