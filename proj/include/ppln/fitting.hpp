#pragma once

// Weighted least-squares fits of dip and fringe scans with asymptotic errors.
//
// Fits run in rate space: y = counts / integration_time, with variance
// max(variance, 1) / integration_time^2.

#include "ppln/interference.hpp"

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ppln::fitting {

struct ScanData {
  std::vector<double> x;  // ps or HWP degrees
  std::vector<double> counts;
  // Count variance per point; equals counts for raw Poisson data. Kept
  // separately so accidental subtraction does not shrink the weights.
  std::vector<double> variance;
  double integration_time_s = 1.0;
  bool net = false;

  // Raw data: variance = counts.
  static ScanData from_counts(std::vector<double> x, std::vector<double> counts,
                              double integration_time_s);
  void validate() const;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  int iterations = 0;

  double param(const std::string& name) const;
  double error(const std::string& name) const;
};

enum class ModelKind { dip, fringe };

// R0 [1 - V exp(-4 ln2 (x - x0)^2 / w^2)], params (R0, V, tau0, w).
double dip_model(const Eigen::VectorXd& p, double x);
Eigen::VectorXd dip_gradient(const Eigen::VectorXd& p, double x);
// (R0 / 2) [1 - V cos(4 (x - x0))], x in degrees, params (R0, V, theta0).
double fringe_model(const Eigen::VectorXd& p, double x);
Eigen::VectorXd fringe_gradient(const Eigen::VectorXd& p, double x);

double evaluate(ModelKind kind, const Eigen::VectorXd& p, double x);
double chi_square(ModelKind kind, const ScanData& data, const Eigen::VectorXd& p);
Eigen::VectorXd chi_square_gradient(ModelKind kind, const ScanData& data,
                                    const Eigen::VectorXd& p);

inline constexpr int kMinPoints = 6;
inline constexpr int kMaxIterations = 500;

FitResult fit_dip(const ScanData& data);
FitResult fit_fringe(const ScanData& data);

// Subtracts accidental_rate x integration time, floored at zero.
ScanData net_correct(const ScanData& data, double accidental_rate);

struct FringeFit {
  double alice_hwp_deg = 0.0;
  FitResult fit;
};

// Needs fringes whose Alice settings cover a, a', and their orthogonal angles.
interference::ChshResult chsh_from_fits(std::span<const FringeFit> fits,
                                        const interference::ChshSettings& settings = {});

// Columns: x, counts, integration_time_s (optional variance).
ScanData read_scan_csv(const std::filesystem::path& path);
std::string scan_csv(const ScanData& data, const std::string& x_label = "x");

}  // namespace ppln::fitting
