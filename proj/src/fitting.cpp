#include "ppln/fitting.hpp"

#include "ppln/error.hpp"
#include "ppln/numfmt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ppln::fitting {

namespace {

constexpr double k4Ln2 = 4.0 * std::numbers::ln2;

double rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Bounded-V parametrization: V = (1 + sin u) / 2.
double v_from_u(double u) { return 0.5 * (1.0 + std::sin(u)); }
double u_from_v(double v) { return std::asin(std::clamp(2.0 * v - 1.0, -1.0, 1.0)); }

struct Problem {
  ModelKind kind;
  const ScanData& data;
  std::vector<double> y;
  std::vector<double> sqrt_w;

  Problem(ModelKind k, const ScanData& d) : kind(k), data(d) {
    const double t = d.integration_time_s;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      y.push_back(d.counts[i] / t);
      sqrt_w.push_back(t / std::sqrt(std::max(d.variance[i], 1.0)));
    }
  }

  Eigen::VectorXd natural(const Eigen::VectorXd& u) const {
    Eigen::VectorXd p = u;
    p[1] = v_from_u(u[1]);
    return p;
  }

  Eigen::VectorXd residuals(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd p = natural(u);
    Eigen::VectorXd r(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i)
      r[static_cast<Eigen::Index>(i)] = sqrt_w[i] * (y[i] - evaluate(kind, p, data.x[i]));
    return r;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& u) const {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(y.size()), u.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      const double h = 1e-6 * std::max(std::abs(u[k]), 1.0);
      Eigen::VectorXd up = u;
      Eigen::VectorXd dn = u;
      up[k] += h;
      dn[k] -= h;
      j.col(k) = (residuals(up) - residuals(dn)) / (2.0 * h);
    }
    return j;
  }
};

FitResult levenberg_marquardt(const Problem& pr, Eigen::VectorXd u,
                              std::vector<std::string> names) {
  Eigen::VectorXd r = pr.residuals(u);
  double chi = r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  for (; it < kMaxIterations && !converged; ++it) {
    const Eigen::MatrixXd j = pr.jacobian(u);
    const Eigen::MatrixXd a = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd m = a;
      for (Eigen::Index k = 0; k < m.rows(); ++k) m(k, k) += lambda * a(k, k) + 1e-300;
      const Eigen::VectorXd step = m.ldlt().solve(-g);
      const Eigen::VectorXd trial = u + step;
      const Eigen::VectorXd r_trial = pr.residuals(trial);
      const double chi_trial = r_trial.squaredNorm();
      if (std::isfinite(chi_trial) && chi_trial < chi) {
        const double gain = chi - chi_trial;
        u = trial;
        r = r_trial;
        chi = chi_trial;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (gain <= 1e-15 * chi + 1e-30 &&
            step.norm() <= 1e-10 * (u.norm() + 1e-10))
          converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step left: at the optimum to machine precision.
          converged = true;
          break;
        }
      }
    }
  }
  if (!converged)
    throw Error(ErrorCode::no_convergence,
                "fit did not converge after " + std::to_string(kMaxIterations) +
                    " iterations (chi2 = " + format_double(chi) + ")");

  FitResult fit;
  fit.names = std::move(names);
  fit.params = pr.natural(u);
  fit.iterations = it;
  fit.chi2 = chi;
  const auto n = static_cast<Eigen::Index>(pr.y.size());
  const auto np = fit.params.size();
  fit.reduced_chi2 = n > np ? chi / static_cast<double>(n - np) : 0.0;

  // Unscaled covariance in natural parameters from the analytic model gradient.
  Eigen::MatrixXd jn(n, np);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = pr.data.x[static_cast<std::size_t>(i)];
    const Eigen::VectorXd grad = pr.kind == ModelKind::dip ? dip_gradient(fit.params, x)
                                                            : fringe_gradient(fit.params, x);
    jn.row(i) = pr.sqrt_w[static_cast<std::size_t>(i)] * grad.transpose();
  }
  const Eigen::MatrixXd info = jn.transpose() * jn;
  Eigen::MatrixXd cov = info.completeOrthogonalDecomposition().pseudoInverse();
  cov = 0.5 * (cov + cov.transpose());
  fit.covariance = cov;
  fit.std_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

void check_fit_input(const ScanData& data) {
  data.validate();
  require(static_cast<int>(data.x.size()) >= kMinPoints, ErrorCode::invalid_argument,
          "fit needs at least " + std::to_string(kMinPoints) + " points");
  const auto [mn, mx] = std::minmax_element(data.counts.begin(), data.counts.end());
  require(*mx > *mn, ErrorCode::no_signal,
          "counts are constant; no dip or fringe detected");
}

}  // namespace

ScanData ScanData::from_counts(std::vector<double> x, std::vector<double> counts,
                               double integration_time_s) {
  ScanData d;
  d.x = std::move(x);
  d.variance = counts;
  d.counts = std::move(counts);
  d.integration_time_s = integration_time_s;
  return d;
}

void ScanData::validate() const {
  require(x.size() == counts.size() && x.size() == variance.size(), ErrorCode::invalid_argument,
          "scan columns have different lengths");
  require(std::isfinite(integration_time_s) && integration_time_s > 0.0,
          ErrorCode::invalid_argument, "integration time must be positive");
  for (std::size_t i = 0; i < x.size(); ++i)
    require(std::isfinite(x[i]) && std::isfinite(counts[i]) && counts[i] >= 0.0 &&
                std::isfinite(variance[i]) && variance[i] >= 0.0,
            ErrorCode::invalid_argument, "scan entries must be finite and counts non-negative");
}

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return params[static_cast<Eigen::Index>(i)];
  throw Error(ErrorCode::invalid_argument, "no fit parameter '" + name + "'");
}

double FitResult::error(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return std_errors[static_cast<Eigen::Index>(i)];
  throw Error(ErrorCode::invalid_argument, "no fit parameter '" + name + "'");
}

double dip_model(const Eigen::VectorXd& p, double x) {
  const double d = x - p[2];
  return p[0] * (1.0 - p[1] * std::exp(-k4Ln2 * d * d / (p[3] * p[3])));
}

Eigen::VectorXd dip_gradient(const Eigen::VectorXd& p, double x) {
  const double d = x - p[2];
  const double w2 = p[3] * p[3];
  const double e = std::exp(-k4Ln2 * d * d / w2);
  Eigen::VectorXd g(4);
  g[0] = 1.0 - p[1] * e;
  g[1] = -p[0] * e;
  g[2] = -p[0] * p[1] * e * (2.0 * k4Ln2 * d / w2);
  g[3] = -p[0] * p[1] * e * (2.0 * k4Ln2 * d * d / (w2 * p[3]));
  return g;
}

double fringe_model(const Eigen::VectorXd& p, double x) {
  return 0.5 * p[0] * (1.0 - p[1] * std::cos(4.0 * rad(x - p[2])));
}

Eigen::VectorXd fringe_gradient(const Eigen::VectorXd& p, double x) {
  const double phase = 4.0 * rad(x - p[2]);
  Eigen::VectorXd g(3);
  g[0] = 0.5 * (1.0 - p[1] * std::cos(phase));
  g[1] = -0.5 * p[0] * std::cos(phase);
  g[2] = -0.5 * p[0] * p[1] * std::sin(phase) * 4.0 * std::numbers::pi / 180.0;
  return g;
}

double evaluate(ModelKind kind, const Eigen::VectorXd& p, double x) {
  return kind == ModelKind::dip ? dip_model(p, x) : fringe_model(p, x);
}

double chi_square(ModelKind kind, const ScanData& data, const Eigen::VectorXd& p) {
  data.validate();
  const double t = data.integration_time_s;
  double chi = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double r = data.counts[i] / t - evaluate(kind, p, data.x[i]);
    chi += r * r * t * t / std::max(data.variance[i], 1.0);
  }
  return chi;
}

Eigen::VectorXd chi_square_gradient(ModelKind kind, const ScanData& data,
                                    const Eigen::VectorXd& p) {
  data.validate();
  const double t = data.integration_time_s;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double w = t * t / std::max(data.variance[i], 1.0);
    const double r = data.counts[i] / t - evaluate(kind, p, data.x[i]);
    const Eigen::VectorXd df =
        kind == ModelKind::dip ? dip_gradient(p, data.x[i]) : fringe_gradient(p, data.x[i]);
    g -= 2.0 * w * r * df;
  }
  return g;
}

FitResult fit_dip(const ScanData& data) {
  check_fit_input(data);
  const Problem pr(ModelKind::dip, data);
  const auto& x = data.x;
  const auto& y = pr.y;
  const std::size_t n = y.size();

  const std::size_t edge = std::min<std::size_t>(3, n / 3);
  double base = 0.0;
  for (std::size_t i = 0; i < edge; ++i) base += y[i] + y[n - 1 - i];
  base /= static_cast<double>(2 * edge);
  const auto i_min = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  require(base > y[i_min], ErrorCode::no_signal, "no dip detected");
  const double v0 = std::clamp((base - y[i_min]) / base, 0.01, 0.99);

  // Width from the half-depth crossings, falling back to a quarter of the span.
  const double half = 0.5 * (base + y[i_min]);
  double w0 = 0.25 * (x.back() - x.front());
  std::size_t l = i_min;
  while (l > 0 && y[l] < half) --l;
  std::size_t r = i_min;
  while (r + 1 < n && y[r] < half) ++r;
  if (y[l] >= half && y[r] >= half && r > l) w0 = std::max(x[r] - x[l], 1e-3 * std::abs(w0));
  else w0 = std::abs(w0);

  Eigen::VectorXd u(4);
  u << base, u_from_v(v0), x[i_min], w0;
  FitResult fit = levenberg_marquardt(pr, u, {"R0", "V", "tau0", "w"});
  fit.params[3] = std::abs(fit.params[3]);
  return fit;
}

FitResult fit_fringe(const ScanData& data) {
  check_fit_input(data);
  const auto [xmin, xmax] = std::minmax_element(data.x.begin(), data.x.end());
  require(*xmax - *xmin >= 45.0 - 1e-9, ErrorCode::invalid_argument,
          "fringe scan must span at least half a period (45 deg)");
  const Problem pr(ModelKind::fringe, data);

  // Linear start: y = c0 + c1 cos(4x) + c2 sin(4x).
  const auto n = static_cast<Eigen::Index>(pr.y.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ang = 4.0 * rad(data.x[static_cast<std::size_t>(i)]);
    const double w = pr.sqrt_w[static_cast<std::size_t>(i)];
    a.row(i) << w, w * std::cos(ang), w * std::sin(ang);
    b[i] = w * pr.y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  require(c[0] > 0.0, ErrorCode::no_signal, "no fringe detected");
  const double amp = std::hypot(c[1], c[2]);
  const double v0 = std::clamp(amp / c[0], 0.01, 0.99);
  const double theta0 = std::atan2(-c[2], -c[1]) / 4.0 * 180.0 / std::numbers::pi;

  Eigen::VectorXd u(3);
  u << 2.0 * c[0], u_from_v(v0), theta0;
  FitResult fit = levenberg_marquardt(pr, u, {"R0", "V", "theta0"});
  double t0 = std::fmod(fit.params[2], 90.0);
  if (t0 < 0.0) t0 += 90.0;
  if (t0 >= 90.0) t0 -= 90.0;
  fit.params[2] = t0;
  return fit;
}

ScanData net_correct(const ScanData& data, double accidental_rate) {
  data.validate();
  require(std::isfinite(accidental_rate) && accidental_rate >= 0.0, ErrorCode::invalid_argument,
          "accidental rate must be non-negative");
  ScanData out = data;
  const double sub = accidental_rate * data.integration_time_s;
  for (double& c : out.counts) c = std::max(0.0, c - sub);
  out.net = true;
  return out;
}

interference::ChshResult chsh_from_fits(std::span<const FringeFit> fits,
                                        const interference::ChshSettings& s) {
  require(fits.size() >= 4, ErrorCode::invalid_argument, "CHSH needs four fringe fits");
  for (const auto& f : fits)
    require(f.fit.params.size() == 3, ErrorCode::invalid_argument,
            "CHSH needs fringe fits (R0, V, theta0)");

  auto find = [&](double polarizer_deg) -> std::size_t {
    for (std::size_t i = 0; i < fits.size(); ++i) {
      double d = std::fmod(2.0 * fits[i].alice_hwp_deg - polarizer_deg, 180.0);
      if (d < 0.0) d += 180.0;
      if (d < 1e-6 || d > 180.0 - 1e-6) return i;
    }
    throw Error(ErrorCode::invalid_argument,
                "no fringe recorded at Alice polarizer angle " + format_double(polarizer_deg));
  };
  const std::array<std::size_t, 4> idx{find(s.a), find(s.a + 90.0), find(s.a_prime),
                                       find(s.a_prime + 90.0)};

  // Stacked parameters of the four fringes in the order of idx.
  Eigen::VectorXd theta(12);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(12, 12);
  for (int k = 0; k < 4; ++k) {
    theta.segment<3>(3 * k) = fits[idx[static_cast<std::size_t>(k)]].fit.params;
    cov.block<3, 3>(3 * k, 3 * k) = fits[idx[static_cast<std::size_t>(k)]].fit.covariance;
  }

  auto e_values = [&](const Eigen::VectorXd& th) {
    auto rate = [&](int k, double beta) {
      return std::max(0.0, fringe_model(th.segment<3>(3 * k), beta / 2.0));
    };
    auto e = [&](int k, int k_perp, double b) {
      interference::CoincidenceQuad q{rate(k, b), rate(k, b + 90.0), rate(k_perp, b),
                                      rate(k_perp, b + 90.0)};
      return interference::correlation_E(q);
    };
    return std::array<double, 4>{e(0, 1, s.b), e(0, 1, s.b_prime), e(2, 3, s.b),
                                 e(2, 3, s.b_prime)};
  };
  auto s_value = [&](const Eigen::VectorXd& th) {
    return interference::chsh_S(e_values(th)).S;
  };

  Eigen::VectorXd grad(12);
  for (int k = 0; k < 12; ++k) {
    const double h = 1e-6 * std::max(std::abs(theta[k]), 1.0);
    Eigen::VectorXd up = theta;
    Eigen::VectorXd dn = theta;
    up[k] += h;
    dn[k] -= h;
    grad[k] = (s_value(up) - s_value(dn)) / (2.0 * h);
  }
  interference::ChshResult r = interference::chsh_S(e_values(theta));
  r.std_error = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  r.n_sigma_violation = r.std_error > 0.0 ? (r.S - 2.0) / r.std_error
                                          : std::numeric_limits<double>::infinity();
  return r;
}

ScanData read_scan_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open scan file " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse,
          "scan file " + path.string() + " is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_counts = column("counts");
  const int c_time = column("integration_time_s");
  const int c_var = column("variance");
  require(!header.empty() && c_counts > 0 && c_time > 0, ErrorCode::parse,
          "scan header must contain x, counts, integration_time_s");

  ScanData d;
  bool first = true;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    require(cells.size() == header.size(), ErrorCode::parse,
            path.string() + ":" + std::to_string(line_no) + ": wrong number of columns");
    auto num = [&](int c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[static_cast<std::size_t>(c)], &used);
        if (used != cells[static_cast<std::size_t>(c)].size()) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw Error(ErrorCode::parse,
                    path.string() + ":" + std::to_string(line_no) + ": not a number");
      }
    };
    const double t = num(c_time);
    if (first) d.integration_time_s = t;
    require(t == d.integration_time_s, ErrorCode::parse,
            "integration time must be the same for every point");
    first = false;
    d.x.push_back(num(0));
    d.counts.push_back(num(c_counts));
    d.variance.push_back(c_var >= 0 ? num(c_var) : d.counts.back());
  }
  d.validate();
  return d;
}

std::string scan_csv(const ScanData& data, const std::string& x_label) {
  std::string out = x_label + ",counts,integration_time_s,variance\n";
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    out += format_double(data.x[i]) + ',' + format_double(data.counts[i]) + ',' +
           format_double(data.integration_time_s) + ',' + format_double(data.variance[i]) + '\n';
  }
  return out;
}

}  // namespace ppln::fitting
