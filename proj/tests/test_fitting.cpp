#include "oracles/oracles.hpp"
#include "ppln/error.hpp"
#include "ppln/fitting.hpp"
#include "ppln/interference.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

using namespace ppln;
using namespace ppln::fitting;

namespace {

std::vector<double> grid(double start, double step, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(start + step * i);
  return x;
}

double dip_rate(double r0, double v, double x0, double w, double x) {
  return r0 * (1.0 - v * std::exp(-4.0 * oracle::kLn2 * (x - x0) * (x - x0) / (w * w)));
}

double fringe_rate(double r0, double v, double t0, double x) {
  return 0.5 * r0 * (1.0 - v * std::cos(4.0 * oracle::rad(x - t0)));
}

template <class F>
ScanData noiseless(const std::vector<double>& x, double t, F rate) {
  std::vector<double> counts;
  for (double xi : x) counts.push_back(rate(xi) * t);
  return ScanData::from_counts(x, counts, t);
}

template <class F>
ScanData poisson_sample(const std::vector<double>& x, double t, F rate, std::mt19937_64& rng) {
  std::vector<double> counts;
  for (double xi : x) {
    std::poisson_distribution<long> d(rate(xi) * t);
    counts.push_back(static_cast<double>(d(rng)));
  }
  return ScanData::from_counts(x, counts, t);
}

double stddev(const std::vector<double>& v) {
  double m = 0.0;
  for (double a : v) m += a;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double a : v) s += (a - m) * (a - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean(const std::vector<double>& v) {
  double m = 0.0;
  for (double a : v) m += a;
  return m / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("noiseless dip recovery") {
  const auto x = grid(-25.0, 1.0, 51);
  for (double v : {0.3, 0.83, 0.999})
    for (double x0 : {-2.0, 0.0, 3.5})
      for (double w : {5.2, 7.35}) {
        const auto data = noiseless(x, 10.0, [&](double t) { return dip_rate(450.0, v, x0, w, t); });
        const auto fit = fit_dip(data);
        CHECK(fit.param("R0") == doctest::Approx(450.0).epsilon(1e-6));
        CHECK(fit.param("V") == doctest::Approx(v).epsilon(1e-6));
        CHECK(fit.param("tau0") == doctest::Approx(x0).epsilon(1e-6).scale(1.0));
        CHECK(fit.param("w") == doctest::Approx(w).epsilon(1e-6));
        CHECK(fit.chi2 < 1e-8);
      }
}

TEST_CASE("noiseless fringe recovery") {
  const auto x = grid(0.0, 5.0, 37);
  for (double v : {0.2, 0.83, 0.99})
    for (double t0 : {0.0, 10.0, 33.75, 84.0}) {
      const auto data = noiseless(x, 10.0, [&](double a) { return fringe_rate(450.0, v, t0, a); });
      const auto fit = fit_fringe(data);
      CHECK(fit.param("R0") == doctest::Approx(450.0).epsilon(1e-6));
      CHECK(fit.param("V") == doctest::Approx(v).epsilon(1e-6));
      CHECK(fit.param("theta0") == doctest::Approx(t0).epsilon(1e-6).scale(1.0));
      CHECK(fit.param("theta0") >= 0.0);
      CHECK(fit.param("theta0") < 90.0);
    }
}

TEST_CASE("a 10 degree fringe shift moves theta0 by 10 degrees") {
  const auto x = grid(0.0, 5.0, 37);
  const auto base = fit_fringe(noiseless(x, 5.0, [](double a) { return fringe_rate(300.0, 0.9, 20.0, a); }));
  const auto moved = fit_fringe(noiseless(x, 5.0, [](double a) { return fringe_rate(300.0, 0.9, 30.0, a); }));
  CHECK(moved.param("theta0") - base.param("theta0") == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(moved.param("V") == doctest::Approx(base.param("V")).epsilon(1e-9));
}

TEST_CASE("property: analytic gradients match central differences") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto xd = grid(-20.0, 1.0, 41);
  const auto xf = grid(0.0, 5.0, 37);
  const auto dip_data = noiseless(xd, 10.0, [](double t) { return dip_rate(400.0, 0.8, 0.5, 7.0, t); });
  const auto fr_data = noiseless(xf, 10.0, [](double a) { return fringe_rate(400.0, 0.8, 12.0, a); });

  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd pd(4), pf(3);
    pd << 300.0 + 200.0 * u(rng), 0.2 + 0.7 * u(rng), -3.0 + 6.0 * u(rng), 4.0 + 6.0 * u(rng);
    pf << 300.0 + 200.0 * u(rng), 0.2 + 0.7 * u(rng), 90.0 * u(rng);
    const double xpt = -10.0 + 20.0 * u(rng);

    const Eigen::VectorXd gm = dip_gradient(pd, xpt);
    const Eigen::VectorXd gc = chi_square_gradient(ModelKind::dip, dip_data, pd);
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(pd[k]));
      Eigen::VectorXd up = pd, dn = pd;
      up[k] += h;
      dn[k] -= h;
      const double fd_model = (dip_model(up, xpt) - dip_model(dn, xpt)) / (2.0 * h);
      const double fd_chi = (chi_square(ModelKind::dip, dip_data, up) -
                             chi_square(ModelKind::dip, dip_data, dn)) / (2.0 * h);
      CHECK(gm[k] == doctest::Approx(fd_model).epsilon(1e-5).scale(1e-6));
      CHECK(gc[k] == doctest::Approx(fd_chi).epsilon(1e-5).scale(1e-3));
    }

    const Eigen::VectorXd fm = fringe_gradient(pf, 3.0 * xpt);
    const Eigen::VectorXd fc = chi_square_gradient(ModelKind::fringe, fr_data, pf);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(pf[k]));
      Eigen::VectorXd up = pf, dn = pf;
      up[k] += h;
      dn[k] -= h;
      const double fd_model = (fringe_model(up, 3.0 * xpt) - fringe_model(dn, 3.0 * xpt)) / (2.0 * h);
      const double fd_chi = (chi_square(ModelKind::fringe, fr_data, up) -
                             chi_square(ModelKind::fringe, fr_data, dn)) / (2.0 * h);
      CHECK(fm[k] == doctest::Approx(fd_model).epsilon(1e-5).scale(1e-6));
      CHECK(fc[k] == doctest::Approx(fd_chi).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("model evaluation dispatch") {
  Eigen::VectorXd pd(4), pf(3);
  pd << 100.0, 0.5, 1.0, 4.0;
  pf << 100.0, 0.5, 10.0;
  CHECK(evaluate(ModelKind::dip, pd, 1.0) == doctest::Approx(50.0));
  CHECK(evaluate(ModelKind::dip, pd, 3.0) == doctest::Approx(75.0));
  CHECK(evaluate(ModelKind::fringe, pf, 10.0) == doctest::Approx(25.0));
  CHECK(evaluate(ModelKind::fringe, pf, 55.0) == doctest::Approx(75.0));
}

TEST_CASE("property: reported errors match the resampling spread") {
  std::mt19937_64 rng(7);
  const auto xd = grid(-20.0, 1.0, 41);
  const auto xf = grid(0.0, 5.0, 37);
  auto dip = [](double t) { return dip_rate(450.0, 0.83, 0.0, 7.1, t); };
  auto fringe = [](double a) { return fringe_rate(450.0, 0.83, 22.5, a); };

  std::vector<double> dv, dw, dv_err, dw_err, fv, ft, fv_err, ft_err;
  for (int i = 0; i < 100; ++i) {
    const auto fd = fit_dip(poisson_sample(xd, 10.0, dip, rng));
    dv.push_back(fd.param("V"));
    dw.push_back(fd.param("w"));
    dv_err.push_back(fd.error("V"));
    dw_err.push_back(fd.error("w"));
    const auto ff = fit_fringe(poisson_sample(xf, 10.0, fringe, rng));
    fv.push_back(ff.param("V"));
    ft.push_back(ff.param("theta0"));
    fv_err.push_back(ff.error("V"));
    ft_err.push_back(ff.error("theta0"));
  }
  CHECK(stddev(dv) == doctest::Approx(mean(dv_err)).epsilon(0.3));
  CHECK(stddev(dw) == doctest::Approx(mean(dw_err)).epsilon(0.3));
  CHECK(stddev(fv) == doctest::Approx(mean(fv_err)).epsilon(0.3));
  CHECK(stddev(ft) == doctest::Approx(mean(ft_err)).epsilon(0.3));
  CHECK(std::abs(mean(dv) - 0.83) < 4.0 * mean(dv_err) / 10.0);
  CHECK(std::abs(mean(fv) - 0.83) < 4.0 * mean(fv_err) / 10.0);
}

TEST_CASE("property: four times the integration time halves the errors") {
  std::mt19937_64 rng(99);
  const auto xd = grid(-20.0, 1.0, 41);
  auto dip = [](double t) { return dip_rate(450.0, 0.83, 0.0, 7.1, t); };
  std::vector<double> short_err, long_err;
  for (int i = 0; i < 20; ++i) {
    short_err.push_back(fit_dip(poisson_sample(xd, 10.0, dip, rng)).error("V"));
    long_err.push_back(fit_dip(poisson_sample(xd, 40.0, dip, rng)).error("V"));
  }
  CHECK(mean(long_err) / mean(short_err) == doctest::Approx(0.5).epsilon(0.2));

  const auto a = fit_dip(noiseless(xd, 10.0, dip));
  const auto b = fit_dip(noiseless(xd, 40.0, dip));
  CHECK(b.error("V") / a.error("V") == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("fit input validation") {
  const auto few = noiseless(grid(0.0, 5.0, 5), 1.0, [](double a) { return fringe_rate(100.0, 0.9, 0.0, a); });
  CHECK_THROWS_AS(fit_fringe(few), Error);
  const auto flat = ScanData::from_counts(grid(0.0, 5.0, 20), std::vector<double>(20, 10.0), 1.0);
  try {
    fit_dip(flat);
    FAIL("expected no_signal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_signal);
  }
  const auto narrow = noiseless(grid(0.0, 2.0, 20), 1.0, [](double a) { return fringe_rate(100.0, 0.9, 0.0, a); });
  CHECK_THROWS_AS(fit_fringe(narrow), Error);
  auto ragged = flat;
  ragged.counts.pop_back();
  CHECK_THROWS_AS(ragged.validate(), Error);
  auto negative = flat;
  negative.counts[3] = -1.0;
  CHECK_THROWS_AS(negative.validate(), Error);
  auto no_time = flat;
  no_time.integration_time_s = 0.0;
  CHECK_THROWS_AS(no_time.validate(), Error);
  const auto fit = fit_dip(noiseless(grid(-20.0, 1.0, 41), 1.0, [](double t) { return dip_rate(100.0, 0.5, 0.0, 7.0, t); }));
  CHECK_THROWS_AS(fit.param("phase"), Error);
}

TEST_CASE("accidental subtraction") {
  const auto raw = ScanData::from_counts({0, 1, 2, 3, 4, 5}, {100, 50, 5, 50, 100, 80}, 2.0);
  const auto net = net_correct(raw, 5.0);
  CHECK(net.net);
  CHECK_FALSE(raw.net);
  CHECK(net.counts == std::vector<double>{90, 40, 0, 40, 90, 70});
  CHECK(net.variance == raw.variance);
  CHECK_THROWS_AS(net_correct(raw, -1.0), Error);

  // A dip with a flat accidental floor is restored to its net visibility.
  const auto x = grid(-20.0, 1.0, 41);
  const auto data = noiseless(x, 10.0, [](double t) { return 76.5 + dip_rate(373.5, 1.0, 0.0, 7.1, t); });
  CHECK(fit_dip(data).param("V") == doctest::Approx(0.83).epsilon(1e-6));
  CHECK(fit_dip(net_correct(data, 76.5)).param("V") == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("CHSH from fitted fringes") {
  const auto bob = grid(0.0, 5.0, 37);
  const double alice[] = {0.0, 22.5, 45.0, 67.5};

  SUBCASE("fringes generated from the maximally entangled state") {
    std::vector<FringeFit> fits;
    for (double ta : alice) {
      const auto scan = interference::bell_scan(1.0, 0.0, ta, bob);
      std::vector<double> counts;
      for (double p : scan.coincidence_probability) counts.push_back(1e4 * 4.0 * p);
      fits.push_back({ta, fit_fringe(ScanData::from_counts(bob, counts, 1.0))});
    }
    const auto r = chsh_from_fits(fits);
    CHECK(r.S == doctest::Approx(interference::kTsirelsonBound).epsilon(1e-6));
    CHECK(r.std_error > 0.0);
    CHECK(r.n_sigma_violation > 3.0);
  }

  SUBCASE("uniform fringe visibility V gives 2 sqrt 2 V") {
    for (double v : {1.0, 0.99, 0.83, 0.7}) {
      std::vector<FringeFit> fits;
      for (double ta : alice) {
        // Coincidences follow 1 - V cos 2(alpha + beta) with alpha = 2 ta.
        const auto data = noiseless(bob, 1.0, [&](double tb) {
          return 450.0 * 0.5 * (1.0 - v * std::cos(2.0 * oracle::rad(2.0 * ta + 2.0 * tb)));
        });
        fits.push_back({ta, fit_fringe(data)});
      }
      CHECK(chsh_from_fits(fits).S == doctest::Approx(2.0 * std::sqrt(2.0) * v).epsilon(1e-6));
    }
  }

  SUBCASE("missing settings") {
    std::vector<FringeFit> fits;
    for (double ta : {0.0, 10.0, 20.0, 30.0}) {
      const auto scan = interference::bell_scan(1.0, 0.0, ta, bob);
      std::vector<double> counts;
      for (double p : scan.coincidence_probability) counts.push_back(1e4 * 4.0 * p);
      fits.push_back({ta, fit_fringe(ScanData::from_counts(bob, counts, 1.0))});
    }
    CHECK_THROWS_AS(chsh_from_fits(fits), Error);
    CHECK_THROWS_AS(chsh_from_fits(std::span<const FringeFit>(fits.data(), 3)), Error);
  }
}

TEST_CASE("scan CSV round trip and parse errors") {
  const auto dir = std::filesystem::temp_directory_path() / "ppln_fitting_test";
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  };

  auto data = ScanData::from_counts({-1.5, 0.0, 1.25}, {10, 3, 12}, 2.5);
  data.variance = {11, 4, 13};
  const auto back = read_scan_csv(write("round.csv", scan_csv(data, "delay_ps")));
  CHECK(back.x == data.x);
  CHECK(back.counts == data.counts);
  CHECK(back.variance == data.variance);
  CHECK(back.integration_time_s == 2.5);

  const auto plain = read_scan_csv(write("plain.csv", "x,counts,integration_time_s\n0,5,1\n\n1,7,1\n"));
  CHECK(plain.variance == std::vector<double>{5, 7});

  auto code_of = [&](const std::filesystem::path& p) {
    try {
      read_scan_csv(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::invalid_argument;
  };
  CHECK(code_of(dir / "missing.csv") == ErrorCode::io);
  CHECK(code_of(write("empty.csv", "")) == ErrorCode::parse);
  CHECK(code_of(write("header.csv", "x,counts\n0,1\n")) == ErrorCode::parse);
  CHECK(code_of(write("nan.csv", "x,counts,integration_time_s\n0,abc,1\n")) == ErrorCode::parse);
  CHECK(code_of(write("cols.csv", "x,counts,integration_time_s\n0,1\n")) == ErrorCode::parse);
  CHECK(code_of(write("time.csv", "x,counts,integration_time_s\n0,1,1\n1,1,2\n")) == ErrorCode::parse);
  std::filesystem::remove_all(dir);
}
