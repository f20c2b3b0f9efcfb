#pragma once

// Detection chain at the granularity of one coincidence window: analytic rate
// budget, a seeded Monte Carlo of the same process, and visibility bookkeeping.
//
// Detector A is the free-running trigger, detector B the gated one. Within a
// window each pair is separated by the beam splitter with probability s; a
// separated pair reaches the analyzers, otherwise both photons go to one side.

#include <cmath>
#include <cstdint>
#include <string>

namespace ppln::counting {

enum class DetectorMode { free_running, gated };

const char* to_string(DetectorMode m);
DetectorMode detector_mode_from_string(const std::string& s);

struct DetectorParams {
  double efficiency = 0.1;
  double dark_prob_per_ns = 1e-5;
  DetectorMode mode = DetectorMode::gated;
  double gate_width_ns = 1.5;

  void validate() const;
  // Dark-click probability in one window of `window_ns`.
  double dark_prob_per_window(double window_ns) const;
};

struct SourceBudget {
  double brightness = 3e5;  // pairs / s / GHz / mW
  double pump_power_mw = 2.5;
  double filter_bandwidth_ghz = 87.35;
  double window_ns = 1.5;
  double loss_a_db = 10.5;  // waveguide to detector A
  double loss_b_db = 10.5;
  double bs_separation_prob = 0.5;
  // Poisson pair number per window instead of at most one pair.
  bool double_pairs = false;

  void validate() const;
  double pair_rate() const;  // pairs / s at the source
  double transmission_a() const;
  double transmission_b() const;
};

// Probabilities for a separated pair: photon a reaches detector A's port with
// monitored_a, photon b reaches B's port with monitored_b, both with joint.
struct AnalyzerModel {
  double monitored_a = 1.0;
  double monitored_b = 1.0;
  double joint = 1.0;

  static AnalyzerModel none() { return {}; }
  // One output of each PBS analyzer: marginals 1/2, joint from the state.
  static AnalyzerModel from_joint(double p) { return {0.5, 0.5, p}; }
  void validate() const;
};

double mean_pairs_per_window(const SourceBudget& budget);

struct CountRates {
  double singles_a = 0.0;
  double singles_b = 0.0;
  double coincidences = 0.0;  // true + accidental
  double accidentals = 0.0;
};

struct RateBreakdown {
  CountRates rates;
  double mu = 0.0;
  double pair_rate = 0.0;
  double detection_a = 0.0;  // transmission x efficiency
  double detection_b = 0.0;
  double dark_window_a = 0.0;
  double dark_window_b = 0.0;
  double click_a_per_pair = 0.0;
  double click_b_per_pair = 0.0;
  double both_per_pair = 0.0;
  double true_coincidences = 0.0;
  // trigger rate x dark probability of B per gate
  double dark_accidentals = 0.0;
  // remainder of the accidentals: uncorrelated photons and multi-pair events
  double photon_accidentals = 0.0;
};

RateBreakdown expected_rates(const SourceBudget& budget, const DetectorParams& det_a,
                             const DetectorParams& det_b, const AnalyzerModel& analyzer);
RateBreakdown expected_rates(const SourceBudget& budget, const DetectorParams& det_a,
                             const DetectorParams& det_b, double interference_prob = 1.0);

struct McTallies {
  std::uint64_t neither = 0;
  std::uint64_t a_only = 0;
  std::uint64_t b_only = 0;
  std::uint64_t both = 0;
  // Windows in which a single pair produced both clicks.
  std::uint64_t true_both = 0;

  std::uint64_t total() const { return neither + a_only + b_only + both; }
  McTallies& operator+=(const McTallies& o);
};

struct McRun {
  std::uint64_t seed = 0;
  std::uint64_t n_windows = 0;
  McTallies tallies;

  CountRates rates(double window_ns) const;
};

inline constexpr const char* kRngAlgorithm = "splitmix64-counter";

// Deterministic in (seed, windows); independent of `workers`.
McRun simulate_counts(const SourceBudget& budget, const DetectorParams& det_a,
                      const DetectorParams& det_b, const AnalyzerModel& analyzer,
                      std::uint64_t n_windows, std::uint64_t seed, unsigned workers = 0);

// Stateless uniform in [0, 1) keyed by (seed, stream, draw).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t draw);

// Poisson variate keyed by (seed, stream).
std::uint64_t poisson_count(std::uint64_t seed, std::uint64_t stream, double mean);

struct Visibility {
  double net = 0.0;
  double raw = 0.0;
};

Visibility visibility_net(double r_max, double r_min, double r_acc);

struct LossCalibration {
  double loss_a_db = 0.0;
  double loss_b_db = 0.0;
  RateBreakdown fitted;
  double target_singles_a = 0.0;
  double target_coincidences = 0.0;
};

// Per-arm losses reproducing measured trigger singles and coincidences. The
// fitted values are calibration targets, not predictions.
LossCalibration calibrate_losses(const SourceBudget& budget, const DetectorParams& det_a,
                                 const DetectorParams& det_b, double target_singles_a = 85e3,
                                 double target_coincidences = 450.0);

inline double db_to_transmission(double db) { return std::pow(10.0, -db / 10.0); }
inline double transmission_to_db(double t) { return -10.0 * std::log10(t); }

}  // namespace ppln::counting
