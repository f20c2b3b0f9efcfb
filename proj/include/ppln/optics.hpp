#pragma once

// Jones calculus for single photons and two-photon polarization states.
//
// Two-photon operators act on the ordered basis (HH, HV, VH, VV) where the
// first label is Alice's photon (a) and the second Bob's (b). Angles cross the
// API in degrees; phases in radians.

#include <Eigen/Dense>

#include <array>
#include <complex>

namespace ppln::optics {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

enum BasisIndex : int { HH = 0, HV = 1, VH = 2, VV = 3 };

struct PolarizationVector {
  Complex amp_h{1.0, 0.0};
  Complex amp_v{0.0, 0.0};

  static PolarizationVector horizontal() { return {{1.0, 0.0}, {0.0, 0.0}}; }
  static PolarizationVector vertical() { return {{0.0, 0.0}, {1.0, 0.0}}; }
  static PolarizationVector diagonal();
  static PolarizationVector antidiagonal();
  // Linear polarization at `angle_deg` from H.
  static PolarizationVector linear(double angle_deg);

  double norm_squared() const { return std::norm(amp_h) + std::norm(amp_v); }
  PolarizationVector normalized() const;
  Eigen::Vector2cd as_vector() const { return {amp_h, amp_v}; }
};

// |<u|v>|^2, insensitive to global phase.
double overlap_probability(const PolarizationVector& u, const PolarizationVector& v);

class JonesMatrix {
 public:
  JonesMatrix() : m_(Eigen::Matrix2cd::Identity()) {}
  explicit JonesMatrix(const Eigen::Matrix2cd& m) : m_(m) {}

  static JonesMatrix identity() { return JonesMatrix(); }

  const Eigen::Matrix2cd& matrix() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  bool is_unitary(double tol = 1e-12) const;

  JonesMatrix operator*(const JonesMatrix& rhs) const { return JonesMatrix(m_ * rhs.m_); }
  PolarizationVector operator*(const PolarizationVector& v) const;

 private:
  Eigen::Matrix2cd m_;
};

// Half-wave plate with fast axis at theta. H maps to linear polarization at 2*theta.
JonesMatrix hwp_matrix(double theta_deg);
// Quarter-wave plate with fast axis at theta; diag(1, i) at theta = 0.
JonesMatrix qwp_matrix(double theta_deg);
// Soleil-Babinet compensator: diag(1, exp(i*phi)).
JonesMatrix sb_matrix(double phi_rad);

// True when a and b differ only by a global phase.
bool equal_up_to_phase(const JonesMatrix& a, const JonesMatrix& b, double tol = 1e-12);
bool equal_up_to_phase(const PolarizationVector& a, const PolarizationVector& b,
                       double tol = 1e-12);

class TwoPhotonDensityMatrix {
 public:
  // Validates Hermiticity, unit trace and positive semidefiniteness.
  explicit TwoPhotonDensityMatrix(const Eigen::Matrix4cd& rho);

  static TwoPhotonDensityMatrix pure(const Eigen::Vector4cd& psi);

  const Eigen::Matrix4cd& matrix() const { return rho_; }
  Complex operator()(int r, int c) const { return rho_(r, c); }

  // Ascending order.
  std::array<double, 4> eigenvalues() const;
  double purity() const;

 private:
  Eigen::Matrix4cd rho_;
};

struct AnalyzerSetting {
  double hwp_angle_deg = 0.0;
  double sb_phase_rad = 0.0;  // applied on Alice's channel only

  // Effective linear-polarizer angle selected by the HWP + PBS analyzer.
  double polarizer_angle_deg() const { return 2.0 * hwp_angle_deg; }
};

// (|HV> + e^{i phi}|VH>)/sqrt(2) with the HV/VH coherence scaled by `coherence`.
TwoPhotonDensityMatrix make_psi_state(double coherence, double phi_rad);

// (j_a (x) j_b) rho (j_a (x) j_b)^dagger. Both matrices must be unitary within 1e-10.
TwoPhotonDensityMatrix apply_local(const TwoPhotonDensityMatrix& rho, const JonesMatrix& j_a,
                                   const JonesMatrix& j_b);

// Joint probability that Alice's photon passes a linear polarizer at alpha and
// Bob's passes one at beta: <alpha,beta| rho |alpha,beta>.
double coincidence_prob(const TwoPhotonDensityMatrix& rho, double alpha_deg, double beta_deg);

}  // namespace ppln::optics
