#include "ppln/counting.hpp"

#include "ppln/error.hpp"

#include <algorithm>
#include <random>
#include <thread>
#include <vector>

namespace ppln::counting {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * kGolden));
}

double key_uniform(std::uint64_t key, std::uint64_t draw) {
  return static_cast<double>(splitmix64(key + draw * kGolden) >> 11) * 0x1.0p-53;
}

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

struct PairModel {
  double s = 0.0;
  double qa = 0.0;  // monitored_a x detection_a
  double qb = 0.0;
  double p11 = 0.0;
  double ca = 0.0;
  double cb = 0.0;
};

PairModel make_pair_model(const SourceBudget& b, const DetectorParams& da,
                          const DetectorParams& db, const AnalyzerModel& an) {
  PairModel m;
  const double eta_a = b.transmission_a() * da.efficiency;
  const double eta_b = b.transmission_b() * db.efficiency;
  m.s = b.bs_separation_prob;
  m.qa = an.monitored_a * eta_a;
  m.qb = an.monitored_b * eta_b;
  m.p11 = m.s * an.joint * eta_a * eta_b;
  m.ca = m.s * m.qa + (1.0 - m.s) * 0.5 * (1.0 - (1.0 - m.qa) * (1.0 - m.qa));
  m.cb = m.s * m.qb + (1.0 - m.s) * 0.5 * (1.0 - (1.0 - m.qb) * (1.0 - m.qb));
  return m;
}

// Probability that none of the pairs in a window produces the given clicks,
// given the per-pair probability q of producing them.
double no_click(double mu, double q, bool poisson) {
  return poisson ? std::exp(-mu * q) : 1.0 - mu * q;
}

}  // namespace

const char* to_string(DetectorMode m) {
  return m == DetectorMode::free_running ? "free_running" : "gated";
}

DetectorMode detector_mode_from_string(const std::string& s) {
  if (s == "free_running") return DetectorMode::free_running;
  if (s == "gated") return DetectorMode::gated;
  throw Error(ErrorCode::invalid_argument, "unknown detector mode '" + s + "'");
}

void DetectorParams::validate() const {
  require(is_probability(efficiency), ErrorCode::out_of_range,
          "detector efficiency must lie in [0, 1]");
  require(std::isfinite(dark_prob_per_ns) && dark_prob_per_ns >= 0.0, ErrorCode::out_of_range,
          "dark count probability must be non-negative");
  require(mode == DetectorMode::free_running || (std::isfinite(gate_width_ns) && gate_width_ns > 0.0),
          ErrorCode::out_of_range, "gate width must be positive");
}

double DetectorParams::dark_prob_per_window(double window_ns) const {
  const double span = mode == DetectorMode::gated ? gate_width_ns : window_ns;
  return std::min(1.0, dark_prob_per_ns * span);
}

void SourceBudget::validate() const {
  const double values[] = {brightness, pump_power_mw, filter_bandwidth_ghz, loss_a_db, loss_b_db};
  for (double v : values)
    require(std::isfinite(v) && v >= 0.0, ErrorCode::out_of_range,
            "source budget entries must be non-negative");
  require(std::isfinite(window_ns) && window_ns > 0.0, ErrorCode::out_of_range,
          "coincidence window must be positive");
  require(is_probability(bs_separation_prob), ErrorCode::out_of_range,
          "beam-splitter separation probability must lie in [0, 1]");
}

double SourceBudget::pair_rate() const { return brightness * pump_power_mw * filter_bandwidth_ghz; }
double SourceBudget::transmission_a() const { return db_to_transmission(loss_a_db); }
double SourceBudget::transmission_b() const { return db_to_transmission(loss_b_db); }

void AnalyzerModel::validate() const {
  require(is_probability(monitored_a) && is_probability(monitored_b) && is_probability(joint),
          ErrorCode::out_of_range, "analyzer probabilities must lie in [0, 1]");
  require(joint <= std::min(monitored_a, monitored_b) + 1e-12, ErrorCode::invalid_argument,
          "joint analyzer probability exceeds a marginal");
}

double mean_pairs_per_window(const SourceBudget& budget) {
  budget.validate();
  return budget.pair_rate() * budget.window_ns * 1e-9;
}

RateBreakdown expected_rates(const SourceBudget& budget, const DetectorParams& det_a,
                             const DetectorParams& det_b, const AnalyzerModel& analyzer) {
  budget.validate();
  det_a.validate();
  det_b.validate();
  analyzer.validate();
  RateBreakdown r;
  r.mu = mean_pairs_per_window(budget);
  require(budget.double_pairs || r.mu <= 1.0, ErrorCode::out_of_range,
          "mean pairs per window exceeds 1; enable double pairs");
  r.pair_rate = budget.pair_rate();
  r.detection_a = budget.transmission_a() * det_a.efficiency;
  r.detection_b = budget.transmission_b() * det_b.efficiency;
  r.dark_window_a = det_a.dark_prob_per_window(budget.window_ns);
  r.dark_window_b = det_b.dark_prob_per_window(budget.window_ns);

  const PairModel m = make_pair_model(budget, det_a, det_b, analyzer);
  r.click_a_per_pair = m.ca;
  r.click_b_per_pair = m.cb;
  r.both_per_pair = m.p11;

  const bool poisson = budget.double_pairs;
  const double not_a = (1.0 - r.dark_window_a) * no_click(r.mu, m.ca, poisson);
  const double not_b = (1.0 - r.dark_window_b) * no_click(r.mu, m.cb, poisson);
  const double neither = (1.0 - r.dark_window_a) * (1.0 - r.dark_window_b) *
                         no_click(r.mu, m.ca + m.cb - m.p11, poisson);
  const double both = std::max(0.0, 1.0 - not_a - not_b + neither);

  const double per_s = 1e9 / budget.window_ns;
  r.rates.singles_a = (1.0 - not_a) * per_s;
  r.rates.singles_b = (1.0 - not_b) * per_s;
  r.rates.coincidences = both * per_s;
  r.true_coincidences = std::min(r.rates.coincidences, r.pair_rate * m.p11);
  r.rates.accidentals = r.rates.coincidences - r.true_coincidences;
  r.dark_accidentals = std::min(r.rates.accidentals, r.rates.singles_a * r.dark_window_b);
  r.photon_accidentals = r.rates.accidentals - r.dark_accidentals;
  return r;
}

RateBreakdown expected_rates(const SourceBudget& budget, const DetectorParams& det_a,
                             const DetectorParams& det_b, double interference_prob) {
  return expected_rates(budget, det_a, det_b, AnalyzerModel{1.0, 1.0, interference_prob});
}

McTallies& McTallies::operator+=(const McTallies& o) {
  neither += o.neither;
  a_only += o.a_only;
  b_only += o.b_only;
  both += o.both;
  true_both += o.true_both;
  return *this;
}

CountRates McRun::rates(double window_ns) const {
  require(n_windows > 0, ErrorCode::invalid_argument, "empty Monte Carlo run");
  const double per_s = 1e9 / (window_ns * static_cast<double>(n_windows));
  CountRates r;
  r.singles_a = static_cast<double>(tallies.a_only + tallies.both) * per_s;
  r.singles_b = static_cast<double>(tallies.b_only + tallies.both) * per_s;
  r.coincidences = static_cast<double>(tallies.both) * per_s;
  r.accidentals = static_cast<double>(tallies.both - tallies.true_both) * per_s;
  return r;
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t draw) {
  return key_uniform(stream_key(seed, stream), draw);
}

std::uint64_t poisson_count(std::uint64_t seed, std::uint64_t stream, double mean) {
  require(std::isfinite(mean) && mean >= 0.0, ErrorCode::invalid_argument,
          "Poisson mean must be non-negative");
  if (mean == 0.0) return 0;
  std::mt19937_64 engine(stream_key(seed, stream));
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(engine);
}

McRun simulate_counts(const SourceBudget& budget, const DetectorParams& det_a,
                      const DetectorParams& det_b, const AnalyzerModel& analyzer,
                      std::uint64_t n_windows, std::uint64_t seed, unsigned workers) {
  require(n_windows >= 1, ErrorCode::invalid_argument, "need at least one window");
  budget.validate();
  det_a.validate();
  det_b.validate();
  analyzer.validate();
  const double mu = mean_pairs_per_window(budget);
  require(budget.double_pairs || mu <= 1.0, ErrorCode::out_of_range,
          "mean pairs per window exceeds 1; enable double pairs");
  const double dark_a = det_a.dark_prob_per_window(budget.window_ns);
  const double dark_b = det_b.dark_prob_per_window(budget.window_ns);
  const PairModel m = make_pair_model(budget, det_a, det_b, analyzer);
  const double eta_a = budget.transmission_a() * det_a.efficiency;
  const double eta_b = budget.transmission_b() * det_b.efficiency;
  const double p_ab = analyzer.joint * eta_a * eta_b;
  const double p_a_only = m.qa - p_ab;
  const double p_b_only = m.qb - p_ab;
  const double exp_mu = std::exp(-mu);

  auto run_range = [&](std::uint64_t first, std::uint64_t last) {
    McTallies t;
    for (std::uint64_t w = first; w < last; ++w) {
      const std::uint64_t key = stream_key(seed, w);
      int pairs = 0;
      const double u0 = key_uniform(key, 0);
      if (budget.double_pairs) {
        double p = exp_mu;
        double cdf = p;
        while (u0 >= cdf && pairs < 64) {
          ++pairs;
          p *= mu / pairs;
          cdf += p;
        }
      } else {
        pairs = u0 < mu ? 1 : 0;
      }
      bool a = key_uniform(key, 1) < dark_a;
      bool b = key_uniform(key, 2) < dark_b;
      bool from_one_pair = false;
      for (int k = 0; k < pairs; ++k) {
        const std::uint64_t base = 3 + 4 * static_cast<std::uint64_t>(k);
        if (key_uniform(key, base) < m.s) {
          const double u = key_uniform(key, base + 1);
          if (u < p_ab) {
            a = b = true;
            from_one_pair = true;
          } else if (u < p_ab + p_a_only) {
            a = true;
          } else if (u < p_ab + p_a_only + p_b_only) {
            b = true;
          }
        } else if (key_uniform(key, base + 1) < 0.5) {
          if (key_uniform(key, base + 2) < m.qa || key_uniform(key, base + 3) < m.qa) a = true;
        } else {
          if (key_uniform(key, base + 2) < m.qb || key_uniform(key, base + 3) < m.qb) b = true;
        }
      }
      if (a && b) {
        ++t.both;
        if (from_one_pair) ++t.true_both;
      } else if (a) {
        ++t.a_only;
      } else if (b) {
        ++t.b_only;
      } else {
        ++t.neither;
      }
    }
    return t;
  };

  unsigned n_workers = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
  n_workers = static_cast<unsigned>(std::min<std::uint64_t>(n_workers, n_windows));
  std::vector<McTallies> partial(n_workers);
  std::vector<std::thread> threads;
  const std::uint64_t chunk = n_windows / n_workers;
  for (unsigned i = 0; i < n_workers; ++i) {
    const std::uint64_t first = i * chunk;
    const std::uint64_t last = (i + 1 == n_workers) ? n_windows : first + chunk;
    if (n_workers == 1) {
      partial[i] = run_range(first, last);
    } else {
      threads.emplace_back([&, i, first, last] { partial[i] = run_range(first, last); });
    }
  }
  for (auto& th : threads) th.join();

  McRun run;
  run.seed = seed;
  run.n_windows = n_windows;
  for (const auto& p : partial) run.tallies += p;
  return run;
}

Visibility visibility_net(double r_max, double r_min, double r_acc) {
  require(std::isfinite(r_max) && std::isfinite(r_min) && std::isfinite(r_acc),
          ErrorCode::invalid_argument, "rates must be finite");
  require(r_min >= 0.0 && r_acc >= 0.0, ErrorCode::invalid_argument,
          "rates must be non-negative");
  require(r_max > r_acc, ErrorCode::no_signal, "maximum rate does not exceed the accidentals");
  return {(r_max - r_min) / (r_max - r_acc), (r_max - r_min) / r_max};
}

LossCalibration calibrate_losses(const SourceBudget& budget, const DetectorParams& det_a,
                                 const DetectorParams& det_b, double target_singles_a,
                                 double target_coincidences) {
  require(target_singles_a > 0.0 && target_coincidences > 0.0, ErrorCode::invalid_argument,
          "calibration targets must be positive");
  SourceBudget b = budget;

  // Both rates increase monotonically with the arm transmission.
  auto solve = [&](double& loss_db, auto metric, double target, const char* what) {
    auto value_at = [&](double t) {
      loss_db = transmission_to_db(t);
      return metric(expected_rates(b, det_a, det_b));
    };
    double lo = 1e-12;
    double hi = 1.0;
    require(value_at(lo) < target && value_at(hi) > target, ErrorCode::no_solution,
            std::string("calibration target for ") + what + " is not reachable");
    for (int i = 0; i < 200 && hi / lo > 1.0 + 1e-13; ++i) {
      const double mid = std::sqrt(lo * hi);
      (value_at(mid) < target ? lo : hi) = mid;
    }
    loss_db = transmission_to_db(std::sqrt(lo * hi));
  };
  solve(b.loss_a_db, [](const RateBreakdown& r) { return r.rates.singles_a; }, target_singles_a,
        "trigger singles");
  solve(b.loss_b_db, [](const RateBreakdown& r) { return r.rates.coincidences; },
        target_coincidences, "coincidences");

  LossCalibration c;
  c.loss_a_db = b.loss_a_db;
  c.loss_b_db = b.loss_b_db;
  c.fitted = expected_rates(b, det_a, det_b);
  c.target_singles_a = target_singles_a;
  c.target_coincidences = target_coincidences;
  return c;
}

}  // namespace ppln::counting
