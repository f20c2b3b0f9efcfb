#include "ppln/optics.hpp"

#include "ppln/error.hpp"

#include <cmath>
#include <string>

namespace ppln::optics {

namespace {

constexpr double kHermitianTol = 1e-12;
constexpr double kTraceTol = 1e-12;
constexpr double kPsdTol = 1e-10;
constexpr double kLocalUnitaryTol = 1e-10;

Eigen::Matrix2cd rotation(double theta_rad) {
  const double c = std::cos(theta_rad);
  const double s = std::sin(theta_rad);
  Eigen::Matrix2cd r;
  r << c, s, -s, c;
  return r;
}

// Retarder with fast axis at theta and retardance delta: R(-theta) diag(1, e^{i delta}) R(theta).
JonesMatrix retarder(double theta_deg, double delta_rad) {
  const double t = deg_to_rad(theta_deg);
  Eigen::Matrix2cd d = Eigen::Matrix2cd::Zero();
  d(0, 0) = 1.0;
  d(1, 1) = std::polar(1.0, delta_rad);
  return JonesMatrix(rotation(-t) * d * rotation(t));
}

}  // namespace

PolarizationVector PolarizationVector::diagonal() { return linear(45.0); }
PolarizationVector PolarizationVector::antidiagonal() { return linear(-45.0); }

PolarizationVector PolarizationVector::linear(double angle_deg) {
  const double a = deg_to_rad(angle_deg);
  return {{std::cos(a), 0.0}, {std::sin(a), 0.0}};
}

PolarizationVector PolarizationVector::normalized() const {
  const double n = std::sqrt(norm_squared());
  require(n > 0.0, ErrorCode::invalid_argument, "cannot normalize a zero polarization vector");
  return {amp_h / n, amp_v / n};
}

double overlap_probability(const PolarizationVector& u, const PolarizationVector& v) {
  return std::norm(std::conj(u.amp_h) * v.amp_h + std::conj(u.amp_v) * v.amp_v);
}

bool JonesMatrix::is_unitary(double tol) const {
  return (m_.adjoint() * m_ - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() <= tol;
}

PolarizationVector JonesMatrix::operator*(const PolarizationVector& v) const {
  const Eigen::Vector2cd out = m_ * v.as_vector();
  return {out(0), out(1)};
}

JonesMatrix hwp_matrix(double theta_deg) { return retarder(theta_deg, kPi); }

JonesMatrix qwp_matrix(double theta_deg) { return retarder(theta_deg, kPi / 2.0); }

JonesMatrix sb_matrix(double phi_rad) { return retarder(0.0, phi_rad); }

bool equal_up_to_phase(const JonesMatrix& a, const JonesMatrix& b, double tol) {
  // Align the phase on the largest element of b.
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  b.matrix().cwiseAbs().maxCoeff(&r, &c);
  const Complex ref_b = b.matrix()(r, c);
  const Complex ref_a = a.matrix()(r, c);
  if (std::abs(ref_a) < tol) return false;
  const Complex phase = (ref_b / ref_a) / std::abs(ref_b / ref_a);
  return ((a.matrix() * phase) - b.matrix()).cwiseAbs().maxCoeff() <= tol;
}

bool equal_up_to_phase(const PolarizationVector& a, const PolarizationVector& b, double tol) {
  const double na = a.norm_squared();
  const double nb = b.norm_squared();
  if (std::abs(na - nb) > tol) return false;
  return std::abs(overlap_probability(a, b) - na * nb) <= tol;
}

TwoPhotonDensityMatrix::TwoPhotonDensityMatrix(const Eigen::Matrix4cd& rho) : rho_(rho) {
  require(rho.allFinite(), ErrorCode::invalid_argument, "density matrix has non-finite entries");
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  require(herm <= kHermitianTol, ErrorCode::invalid_argument,
          "density matrix is not Hermitian (deviation " + std::to_string(herm) + ")");
  const Complex tr = rho.trace();
  require(std::abs(tr - Complex(1.0, 0.0)) <= kTraceTol, ErrorCode::invalid_argument,
          "density matrix trace is not 1");
  const double min_ev = eigenvalues()[0];
  require(min_ev >= -kPsdTol, ErrorCode::invalid_argument,
          "density matrix is not positive semidefinite (eigenvalue " + std::to_string(min_ev) +
              ")");
}

TwoPhotonDensityMatrix TwoPhotonDensityMatrix::pure(const Eigen::Vector4cd& psi) {
  const double n = psi.norm();
  require(n > 0.0, ErrorCode::invalid_argument, "zero state vector");
  const Eigen::Vector4cd u = psi / n;
  Eigen::Matrix4cd rho = u * u.adjoint();
  // Exact Hermitian symmetrization removes rounding asymmetry.
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return TwoPhotonDensityMatrix(rho);
}

std::array<double, 4> TwoPhotonDensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> solver(rho_, Eigen::EigenvaluesOnly);
  const Eigen::Vector4d ev = solver.eigenvalues();
  return {ev(0), ev(1), ev(2), ev(3)};
}

double TwoPhotonDensityMatrix::purity() const { return (rho_ * rho_).trace().real(); }

TwoPhotonDensityMatrix make_psi_state(double coherence, double phi_rad) {
  require(std::isfinite(coherence) && coherence >= 0.0 && coherence <= 1.0,
          ErrorCode::out_of_range, "coherence must lie in [0, 1]");
  require(std::isfinite(phi_rad), ErrorCode::invalid_argument, "phase must be finite");
  Eigen::Matrix4cd rho = Eigen::Matrix4cd::Zero();
  rho(HV, HV) = 0.5;
  rho(VH, VH) = 0.5;
  rho(HV, VH) = 0.5 * coherence * std::polar(1.0, -phi_rad);
  rho(VH, HV) = std::conj(rho(HV, VH));
  return TwoPhotonDensityMatrix(rho);
}

TwoPhotonDensityMatrix apply_local(const TwoPhotonDensityMatrix& rho, const JonesMatrix& j_a,
                                   const JonesMatrix& j_b) {
  require(j_a.is_unitary(kLocalUnitaryTol) && j_b.is_unitary(kLocalUnitaryTol),
          ErrorCode::invalid_argument, "apply_local requires unitary Jones matrices");
  Eigen::Matrix4cd u;
  for (int ra = 0; ra < 2; ++ra)
    for (int rb = 0; rb < 2; ++rb)
      for (int ca = 0; ca < 2; ++ca)
        for (int cb = 0; cb < 2; ++cb) u(2 * ra + rb, 2 * ca + cb) = j_a(ra, ca) * j_b(rb, cb);
  Eigen::Matrix4cd out = u * rho.matrix() * u.adjoint();
  out = 0.5 * (out + out.adjoint()).eval();
  return TwoPhotonDensityMatrix(out);
}

double coincidence_prob(const TwoPhotonDensityMatrix& rho, double alpha_deg, double beta_deg) {
  const double a = deg_to_rad(alpha_deg);
  const double b = deg_to_rad(beta_deg);
  const Eigen::Vector4cd proj(std::cos(a) * std::cos(b), std::cos(a) * std::sin(b),
                              std::sin(a) * std::cos(b), std::sin(a) * std::sin(b));
  const double p = (proj.adjoint() * rho.matrix() * proj)(0, 0).real();
  // Clamp rounding noise only; a valid rho never leaves [0, 1] by more than ~1e-15.
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace ppln::optics
