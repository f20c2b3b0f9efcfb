#include "ppln/experiments.hpp"

#include "ppln/error.hpp"
#include "ppln/numfmt.hpp"
#include "ppln/optics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <set>

#ifndef PPLN_VERSION_STRING
#define PPLN_VERSION_STRING "0.0.0"
#endif
#ifndef PPLN_DATA_DIR
#define PPLN_DATA_DIR "data"
#endif

namespace ppln::experiments {

using nlohmann::ordered_json;

namespace {

// Monte Carlo stream namespaces, one per experiment.
constexpr std::uint64_t kStreamHom = 1ULL << 40;
constexpr std::uint64_t kStreamBell = 2ULL << 40;
constexpr std::uint64_t kStreamChsh = 3ULL << 40;
constexpr std::uint64_t kStreamRates = 4ULL << 40;

constexpr double kMeasuredDipFwhmPs = 7.45;

const char* polarization_name(spdc::Polarization p) { return spdc::to_string(p); }

spdc::Polarization polarization_from_string(const std::string& s) {
  if (s == "H") return spdc::Polarization::H;
  if (s == "V") return spdc::Polarization::V;
  throw Error(ErrorCode::parse, "polarization must be H or V, got '" + s + "'");
}

double wrap_two_pi(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(x, two_pi);
  if (r < 0.0) r += two_pi;
  return r;
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Output {
 public:
  Output(RunReport& report, std::filesystem::path dir) : report_(report), dir_(std::move(dir)) {
    if (!dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      require(!ec, ErrorCode::io, "cannot create output directory '" + dir_.string() + "'");
    }
  }

  void write(const std::string& name, const std::string& content) {
    if (dir_.empty()) return;
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write '" + path.string() + "'");
    out << content;
    require(static_cast<bool>(out), ErrorCode::io, "write failed for '" + path.string() + "'");
    report_.files.push_back(path);
  }

 private:
  RunReport& report_;
  std::filesystem::path dir_;
};

RunReport start_report(const std::string& name, const ExperimentConfig& cfg) {
  RunReport r;
  r.experiment = name;
  r.json["experiment"] = name;
  r.json["software"] = {{"name", "pplnsim"}, {"version", version()}};
  r.json["schema_version"] = kSchemaVersion;
  r.json["seed"] = cfg.seed;
  r.json["rng"] = counting::kRngAlgorithm;
  if (cfg.timestamp) r.json["generated_at"] = timestamp_utc();
  ordered_json inputs = ordered_json::object();
  const auto kv = cfg.to_keyvalues();
  for (const auto& [k, v] : kv.values()) inputs[k] = v;
  r.json["inputs"] = inputs;
  return r;
}

void finish_report(RunReport& r, Output& out) {
  out.write("report.json", r.json.dump(2) + "\n");
}

void add_summary(RunReport& r, const std::string& label, double value, const std::string& unit = {}) {
  r.summary.push_back(label + " = " + format_sig6(value) + (unit.empty() ? "" : " " + unit));
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    v.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1));
  return v;
}

double sample_counts(const ExperimentConfig& cfg, std::uint64_t stream, double rate) {
  const double mean = std::max(0.0, rate) * cfg.campaign.integration_s;
  if (!cfg.campaign.monte_carlo) return mean;
  return static_cast<double>(counting::poisson_count(cfg.seed, stream, mean));
}

struct CampaignLevels {
  double accidental_cps = 0.0;  // A
  double signal_cps = 0.0;      // classical signal level, S0
  double fraction = 0.0;
};

CampaignLevels campaign_levels(const ExperimentConfig& cfg) {
  CampaignLevels l;
  l.fraction = accidental_fraction(cfg);
  l.accidental_cps = l.fraction * cfg.campaign.classical_rate_cps;
  l.signal_cps = cfg.campaign.classical_rate_cps - l.accidental_cps;
  return l;
}

ordered_json visibility_json(const counting::Visibility& v) {
  return {{"net", v.net}, {"raw", v.raw}};
}

ordered_json calibration_targets_json(const ExperimentConfig& cfg) {
  const char* status = "calibration target, not a derived prediction";
  return {
      {"conversion_efficiency", {{"value", cfg.conversion_efficiency}, {"status", status}}},
      {"singles_a_cps", {{"value", cfg.target_singles_cps}, {"status", status}}},
      {"coincidences_cps", {{"value", cfg.target_coincidences_cps}, {"status", status}}},
  };
}

}  // namespace

const char* version() { return PPLN_VERSION_STRING; }

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "schema_version",
      "dispersion.file",
      "qpm.poling_period_um",
      "qpm.temperature_c",
      "qpm.pump_nm",
      "qpm.calibrated_polarization",
      "qpm.design_pump_nm",
      "qpm.tuning.start_c",
      "qpm.tuning.stop_c",
      "qpm.tuning.step_c",
      "spectrum.fwhm_nm",
      "spectrum.sideband_fraction",
      "spectrum.degenerate_center_nm",
      "spectrum.sideband_h_nm",
      "spectrum.sideband_v_nm",
      "spectrum.line_shape",
      "filter.enabled",
      "filter.center_nm",
      "filter.fwhm_nm",
      "filter.shape",
      "source.brightness",
      "source.pump_power_mw",
      "source.window_ns",
      "source.bs_separation_prob",
      "source.double_pairs",
      "losses.a_db",
      "losses.b_db",
      "detector.a.efficiency",
      "detector.a.dark_prob_per_ns",
      "detector.a.mode",
      "detector.a.gate_width_ns",
      "detector.b.efficiency",
      "detector.b.dark_prob_per_ns",
      "detector.b.mode",
      "detector.b.gate_width_ns",
      "rates.mc_windows",
      "rates.target_singles_cps",
      "rates.target_coincidences_cps",
      "rates.conversion_efficiency",
      "interference.coherence_time_ps",
      "interference.dip_center_a_ps",
      "interference.dip_center_b_ps",
      "interference.phi_a_rad",
      "interference.phi_b_rad",
      "hom.delay_min_ps",
      "hom.delay_max_ps",
      "hom.points",
      "bell.bob_start_deg",
      "bell.bob_step_deg",
      "bell.points",
      "bell.alice_hwp_deg",
      "campaign.integration_s",
      "campaign.classical_rate_cps",
      "campaign.accidental_fraction",
      "campaign.monte_carlo",
      "campaign.net",
      "seed",
      "rng.algorithm",
      "output.timestamp",
  };
  return keys;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.dispersion_file = std::filesystem::path(PPLN_DATA_DIR) / "linbo3_congruent.disp";
  c.source.filter_bandwidth_ghz = spdc::bandwidth_ghz(c.filter.center_nm, c.filter.fwhm_nm);
  return c;
}

ExperimentConfig ExperimentConfig::from_keyvalues(const KeyValueFile& kv,
                                                  const std::filesystem::path& base_dir) {
  const auto& keys = known_keys();
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : kv.values())
    require(known.count(k) != 0, ErrorCode::parse,
            kv.origin() + ": unknown configuration key '" + k + "'");
  if (kv.contains("schema_version"))
    require(kv.get_int("schema_version", 0) == kSchemaVersion, ErrorCode::parse,
            kv.origin() + ": unsupported schema_version (expected " +
                std::to_string(kSchemaVersion) + ")");
  if (kv.contains("rng.algorithm"))
    require(kv.get_string("rng.algorithm") == counting::kRngAlgorithm, ErrorCode::parse,
            std::string("rng.algorithm must be ") + counting::kRngAlgorithm);

  ExperimentConfig c = defaults();
  if (auto f = kv.find("dispersion.file")) {
    std::filesystem::path p(*f);
    c.dispersion_file = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }

  c.qpm.poling_period_um = kv.get_double("qpm.poling_period_um", c.qpm.poling_period_um);
  c.qpm.temperature_c = kv.get_double("qpm.temperature_c", c.qpm.temperature_c);
  c.qpm.pump_nm = kv.get_double("qpm.pump_nm", c.qpm.pump_nm);
  c.calibrated_polarization = polarization_from_string(
      kv.get_string("qpm.calibrated_polarization", polarization_name(c.calibrated_polarization)));
  c.design_pump_nm = kv.get_double("qpm.design_pump_nm", c.design_pump_nm);
  c.tuning.start_c = kv.get_double("qpm.tuning.start_c", c.tuning.start_c);
  c.tuning.stop_c = kv.get_double("qpm.tuning.stop_c", c.tuning.stop_c);
  c.tuning.step_c = kv.get_double("qpm.tuning.step_c", c.tuning.step_c);

  c.spectrum_fwhm_nm = kv.get_double("spectrum.fwhm_nm", c.spectrum_fwhm_nm);
  c.sideband_fraction = kv.get_double("spectrum.sideband_fraction", c.sideband_fraction);
  c.degenerate_center_nm = kv.get_double("spectrum.degenerate_center_nm", c.degenerate_center_nm);
  c.sideband_centers_nm.first = kv.get_double("spectrum.sideband_h_nm", c.sideband_centers_nm.first);
  c.sideband_centers_nm.second =
      kv.get_double("spectrum.sideband_v_nm", c.sideband_centers_nm.second);
  if (auto s = kv.find("spectrum.line_shape")) c.line_shape = spdc::line_shape_from_string(*s);
  c.filter_enabled = kv.get_bool("filter.enabled", c.filter_enabled);
  c.filter.center_nm = kv.get_double("filter.center_nm", c.filter.center_nm);
  c.filter.fwhm_nm = kv.get_double("filter.fwhm_nm", c.filter.fwhm_nm);
  if (auto s = kv.find("filter.shape")) c.filter.shape = spdc::filter_shape_from_string(*s);

  c.source.brightness = kv.get_double("source.brightness", c.source.brightness);
  c.source.pump_power_mw = kv.get_double("source.pump_power_mw", c.source.pump_power_mw);
  c.source.window_ns = kv.get_double("source.window_ns", c.source.window_ns);
  c.source.bs_separation_prob =
      kv.get_double("source.bs_separation_prob", c.source.bs_separation_prob);
  c.source.double_pairs = kv.get_bool("source.double_pairs", c.source.double_pairs);
  c.source.loss_a_db = kv.get_double("losses.a_db", c.source.loss_a_db);
  c.source.loss_b_db = kv.get_double("losses.b_db", c.source.loss_b_db);

  auto read_detector = [&](const std::string& prefix, counting::DetectorParams& d) {
    d.efficiency = kv.get_double(prefix + "efficiency", d.efficiency);
    d.dark_prob_per_ns = kv.get_double(prefix + "dark_prob_per_ns", d.dark_prob_per_ns);
    if (auto m = kv.find(prefix + "mode")) d.mode = counting::detector_mode_from_string(*m);
    d.gate_width_ns = kv.get_double(prefix + "gate_width_ns", d.gate_width_ns);
  };
  read_detector("detector.a.", c.detector_a);
  read_detector("detector.b.", c.detector_b);

  const long long windows = kv.get_int("rates.mc_windows", static_cast<long long>(c.mc_windows));
  require(windows >= 1, ErrorCode::out_of_range, "rates.mc_windows must be at least 1");
  c.mc_windows = static_cast<std::uint64_t>(windows);
  c.target_singles_cps = kv.get_double("rates.target_singles_cps", c.target_singles_cps);
  c.target_coincidences_cps =
      kv.get_double("rates.target_coincidences_cps", c.target_coincidences_cps);
  c.conversion_efficiency = kv.get_double("rates.conversion_efficiency", c.conversion_efficiency);

  if (auto t = kv.find("interference.coherence_time_ps"); t && *t != "auto")
    c.interference.coherence_time_ps = kv.get_double("interference.coherence_time_ps");
  c.interference.dip_center_a_ps =
      kv.get_double("interference.dip_center_a_ps", c.interference.dip_center_a_ps);
  c.interference.dip_center_b_ps =
      kv.get_double("interference.dip_center_b_ps", c.interference.dip_center_b_ps);
  c.interference.phi_a_rad = kv.get_double("interference.phi_a_rad", c.interference.phi_a_rad);
  c.interference.phi_b_rad = kv.get_double("interference.phi_b_rad", c.interference.phi_b_rad);

  c.hom.delay_min_ps = kv.get_double("hom.delay_min_ps", c.hom.delay_min_ps);
  c.hom.delay_max_ps = kv.get_double("hom.delay_max_ps", c.hom.delay_max_ps);
  c.hom.points = static_cast<int>(kv.get_int("hom.points", c.hom.points));
  c.bell.bob_start_deg = kv.get_double("bell.bob_start_deg", c.bell.bob_start_deg);
  c.bell.bob_step_deg = kv.get_double("bell.bob_step_deg", c.bell.bob_step_deg);
  c.bell.points = static_cast<int>(kv.get_int("bell.points", c.bell.points));
  if (kv.contains("bell.alice_hwp_deg")) c.bell.alice_hwp_deg = kv.get_doubles("bell.alice_hwp_deg");

  c.campaign.integration_s = kv.get_double("campaign.integration_s", c.campaign.integration_s);
  c.campaign.classical_rate_cps =
      kv.get_double("campaign.classical_rate_cps", c.campaign.classical_rate_cps);
  if (auto f = kv.find("campaign.accidental_fraction")) {
    if (*f == "auto") c.campaign.accidental_fraction.reset();
    else c.campaign.accidental_fraction = kv.get_double("campaign.accidental_fraction");
  }
  c.campaign.monte_carlo = kv.get_bool("campaign.monte_carlo", c.campaign.monte_carlo);
  c.campaign.net = kv.get_bool("campaign.net", c.campaign.net);

  const long long seed = kv.get_int("seed", static_cast<long long>(c.seed));
  require(seed >= 0, ErrorCode::out_of_range, "seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.timestamp = kv.get_bool("output.timestamp", c.timestamp);

  c.validate();
  // Pair bandwidth at the detectors: the filter when present, else the natural line.
  c.source.filter_bandwidth_ghz =
      c.filter_enabled ? spdc::bandwidth_ghz(c.filter.center_nm, c.filter.fwhm_nm)
                       : spdc::bandwidth_ghz(c.degenerate_center_nm, c.spectrum_fwhm_nm);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  require(kv.contains("schema_version"), ErrorCode::parse,
          path.string() + ": missing schema_version");
  return from_keyvalues(kv, path.parent_path());
}

KeyValueFile ExperimentConfig::to_keyvalues() const {
  KeyValueFile kv;
  auto d = [&](const std::string& k, double v) { kv.set(k, format_double(v)); };
  auto b = [&](const std::string& k, bool v) { kv.set(k, v ? "true" : "false"); };
  kv.set("schema_version", std::to_string(kSchemaVersion));
  kv.set("dispersion.file", dispersion_file.string());
  d("qpm.poling_period_um", qpm.poling_period_um);
  d("qpm.temperature_c", qpm.temperature_c);
  d("qpm.pump_nm", qpm.pump_nm);
  kv.set("qpm.calibrated_polarization", polarization_name(calibrated_polarization));
  d("qpm.design_pump_nm", design_pump_nm);
  d("qpm.tuning.start_c", tuning.start_c);
  d("qpm.tuning.stop_c", tuning.stop_c);
  d("qpm.tuning.step_c", tuning.step_c);
  d("spectrum.fwhm_nm", spectrum_fwhm_nm);
  d("spectrum.sideband_fraction", sideband_fraction);
  d("spectrum.degenerate_center_nm", degenerate_center_nm);
  d("spectrum.sideband_h_nm", sideband_centers_nm.first);
  d("spectrum.sideband_v_nm", sideband_centers_nm.second);
  kv.set("spectrum.line_shape", spdc::to_string(line_shape));
  b("filter.enabled", filter_enabled);
  d("filter.center_nm", filter.center_nm);
  d("filter.fwhm_nm", filter.fwhm_nm);
  kv.set("filter.shape", spdc::to_string(filter.shape));
  d("source.brightness", source.brightness);
  d("source.pump_power_mw", source.pump_power_mw);
  d("source.window_ns", source.window_ns);
  d("source.bs_separation_prob", source.bs_separation_prob);
  b("source.double_pairs", source.double_pairs);
  d("losses.a_db", source.loss_a_db);
  d("losses.b_db", source.loss_b_db);
  auto det = [&](const std::string& p, const counting::DetectorParams& x) {
    d(p + "efficiency", x.efficiency);
    d(p + "dark_prob_per_ns", x.dark_prob_per_ns);
    kv.set(p + "mode", counting::to_string(x.mode));
    d(p + "gate_width_ns", x.gate_width_ns);
  };
  det("detector.a.", detector_a);
  det("detector.b.", detector_b);
  kv.set("rates.mc_windows", std::to_string(mc_windows));
  d("rates.target_singles_cps", target_singles_cps);
  d("rates.target_coincidences_cps", target_coincidences_cps);
  d("rates.conversion_efficiency", conversion_efficiency);
  if (interference.coherence_time_ps) d("interference.coherence_time_ps", *interference.coherence_time_ps);
  else kv.set("interference.coherence_time_ps", "auto");
  d("interference.dip_center_a_ps", interference.dip_center_a_ps);
  d("interference.dip_center_b_ps", interference.dip_center_b_ps);
  d("interference.phi_a_rad", interference.phi_a_rad);
  d("interference.phi_b_rad", interference.phi_b_rad);
  d("hom.delay_min_ps", hom.delay_min_ps);
  d("hom.delay_max_ps", hom.delay_max_ps);
  kv.set("hom.points", std::to_string(hom.points));
  d("bell.bob_start_deg", bell.bob_start_deg);
  d("bell.bob_step_deg", bell.bob_step_deg);
  kv.set("bell.points", std::to_string(bell.points));
  std::string angles;
  for (double a : bell.alice_hwp_deg) angles += (angles.empty() ? "" : ",") + format_double(a);
  kv.set("bell.alice_hwp_deg", angles);
  d("campaign.integration_s", campaign.integration_s);
  d("campaign.classical_rate_cps", campaign.classical_rate_cps);
  if (campaign.accidental_fraction) d("campaign.accidental_fraction", *campaign.accidental_fraction);
  else kv.set("campaign.accidental_fraction", "auto");
  b("campaign.monte_carlo", campaign.monte_carlo);
  b("campaign.net", campaign.net);
  kv.set("seed", std::to_string(seed));
  kv.set("rng.algorithm", counting::kRngAlgorithm);
  b("output.timestamp", timestamp);
  return kv;
}

void ExperimentConfig::validate() const {
  qpm.validate();
  require(design_pump_nm > 0.0, ErrorCode::out_of_range, "design pump wavelength must be positive");
  require(tuning.step_c > 0.0 && tuning.stop_c >= tuning.start_c, ErrorCode::out_of_range,
          "tuning range needs start <= stop and a positive step");
  require(spectrum_fwhm_nm > 0.0, ErrorCode::out_of_range, "spectral width must be positive");
  require(sideband_fraction >= 0.0 && sideband_fraction <= 1.0, ErrorCode::out_of_range,
          "sideband fraction must lie in [0, 1]");
  require(!filter_enabled || filter.fwhm_nm > 0.0, ErrorCode::out_of_range,
          "filter FWHM must be positive");
  source.validate();
  detector_a.validate();
  detector_b.validate();
  if (interference.coherence_time_ps)
    require(*interference.coherence_time_ps > 0.0, ErrorCode::out_of_range,
            "coherence time must be positive");
  require(hom.points >= 1 && hom.delay_max_ps >= hom.delay_min_ps, ErrorCode::out_of_range,
          "HOM scan needs at least one point and min <= max");
  require(bell.points >= 1 && bell.bob_step_deg > 0.0, ErrorCode::out_of_range,
          "Bell scan needs at least one point and a positive step");
  require(!bell.alice_hwp_deg.empty(), ErrorCode::out_of_range, "no Alice settings for the Bell scan");
  require(campaign.integration_s > 0.0 && campaign.classical_rate_cps >= 0.0,
          ErrorCode::out_of_range, "integration time must be positive and rates non-negative");
  if (campaign.accidental_fraction)
    require(*campaign.accidental_fraction >= 0.0 && *campaign.accidental_fraction < 1.0,
            ErrorCode::out_of_range, "accidental fraction must lie in [0, 1)");
}

SourceState derive_source(const ExperimentConfig& cfg) {
  SourceState s;
  s.unfiltered = spdc::build_spectrum(cfg.spectrum_fwhm_nm, cfg.sideband_fraction,
                                      cfg.sideband_centers_nm, cfg.degenerate_center_nm,
                                      cfg.line_shape);
  if (cfg.filter_enabled) {
    const auto fr = spdc::apply_filter(s.unfiltered, cfg.filter);
    s.filtered = fr.spectrum;
    s.transmitted_fraction = fr.transmitted_fraction;
    s.coherence_time_ps = spdc::coherence_time(cfg.filter.center_nm, cfg.filter.fwhm_nm);
  } else {
    s.filtered = s.unfiltered;
    s.coherence_time_ps = spdc::coherence_time(cfg.degenerate_center_nm, cfg.spectrum_fwhm_nm);
  }
  if (cfg.interference.coherence_time_ps) s.coherence_time_ps = *cfg.interference.coherence_time_ps;
  s.bandwidth_ghz = cfg.source.filter_bandwidth_ghz;
  s.v0 = s.filtered.indistinguishability();
  s.tau_set_ps = interference::compensator_setpoint(cfg.interference.dip_center_a_ps,
                                                    cfg.interference.dip_center_b_ps);
  const interference::Wavepacket wp{s.coherence_time_ps};
  s.coherence =
      interference::bell_coherence(wp, s.v0, s.tau_set_ps - cfg.interference.dip_center_a_ps);
  return s;
}

double accidental_fraction(const ExperimentConfig& cfg) {
  if (cfg.campaign.accidental_fraction) return *cfg.campaign.accidental_fraction;
  const auto cal = counting::calibrate_losses(cfg.source, cfg.detector_a, cfg.detector_b,
                                              cfg.target_singles_cps, cfg.target_coincidences_cps);
  return cal.fitted.rates.accidentals / cal.fitted.rates.coincidences;
}

ordered_json fit_to_json(const fitting::FitResult& fit) {
  ordered_json params = ordered_json::object();
  ordered_json errors = ordered_json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    params[fit.names[i]] = fit.params[static_cast<Eigen::Index>(i)];
    errors[fit.names[i]] = fit.std_errors[static_cast<Eigen::Index>(i)];
  }
  ordered_json cov = ordered_json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
    cov.push_back(row);
  }
  return {{"params", params},         {"std_errors", errors},
          {"chi2", fit.chi2},         {"reduced_chi2", fit.reduced_chi2},
          {"covariance", cov},        {"iterations", fit.iterations}};
}

ordered_json chsh_to_json(const interference::ChshResult& r) {
  ordered_json j{{"S", r.S}, {"std_error", r.std_error}};
  if (std::isfinite(r.n_sigma_violation)) j["n_sigma_violation"] = r.n_sigma_violation;
  else j["n_sigma_violation"] = nullptr;
  return j;
}

RunReport cmd_qpm(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("qpm", cfg);
  Output out(report, out_dir);
  const auto model = spdc::DispersionModel::load(cfg.dispersion_file);
  const auto& q = cfg.qpm;

  ordered_json uncal = ordered_json::object();
  for (double pump : {q.pump_nm, cfg.design_pump_nm}) {
    const auto p = spdc::find_degenerate_period(model, pump, q.temperature_c, q.pump, q.signal, q.idler);
    uncal[format_double(pump)] = p.period_um;
  }

  const spdc::CalibrationAnchor anchor{q.poling_period_um, q.temperature_c, q.pump_nm,
                                       cfg.calibrated_polarization};
  const auto cal = spdc::calibrate_offsets(model, anchor);
  const auto p_anchor =
      spdc::find_degenerate_period(cal, q.pump_nm, q.temperature_c, q.pump, q.signal, q.idler);
  const auto p_design = spdc::find_degenerate_period(cal, cfg.design_pump_nm, q.temperature_c,
                                                     q.pump, q.signal, q.idler);

  auto tuning = spdc::tuning_curve(q, cal, cfg.tuning);
  std::stable_sort(tuning.begin(), tuning.end(), [](const auto& a, const auto& b) {
    return a.temperature_c < b.temperature_c;
  });
  std::string csv = "temperature_c,signal_nm,idler_nm,dk_slope_rad_per_um_nm,degenerate\n";
  for (const auto& t : tuning)
    csv += format_double(t.temperature_c) + ',' + format_double(t.signal_nm) + ',' +
           format_double(t.idler_nm) + ',' + format_double(t.slope) + ',' +
           (t.degenerate ? "1" : "0") + '\n';
  out.write("tuning_curve.csv", csv);

  std::string disp;
  const auto cal_kv = cal.to_keyvalues();
  for (const auto& [k, v] : cal_kv.values()) disp += k + " = " + v + "\n";
  out.write("calibrated.disp", disp);

  report.json["derived"] = {
      {"dispersion_source", model.source},
      {"calibrated_polarization", polarization_name(cfg.calibrated_polarization)},
      {"offset_h", cal.offset_h},
      {"offset_v", cal.offset_v},
      {"uncalibrated_period_um", uncal},
  };
  report.json["outputs"] = {
      {"period_anchor_um", p_anchor.period_um},
      {"period_anchor_pump_nm", q.pump_nm},
      {"period_anchor_residual_rad_per_um", p_anchor.residual_rad_per_um},
      {"period_design_um", p_design.period_um},
      {"period_design_pump_nm", cfg.design_pump_nm},
      {"tuning_points", tuning.size()},
  };
  add_summary(report, "period(" + format_double(q.pump_nm) + " nm pump)", p_anchor.period_um, "um");
  add_summary(report, "period(" + format_double(cfg.design_pump_nm) + " nm pump)",
              p_design.period_um, "um");
  add_summary(report, "calibration offset " + std::string(polarization_name(cfg.calibrated_polarization)),
              cal.offset(cfg.calibrated_polarization));
  finish_report(report, out);
  return report;
}

RunReport cmd_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("spectrum", cfg);
  Output out(report, out_dir);
  const SourceState s = derive_source(cfg);

  std::string csv = "wavelength_nm,h_unfiltered,v_unfiltered,h_filtered,v_filtered\n";
  std::vector<double> grid(1001);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = cfg.degenerate_center_nm - 5.0 + 0.01 * static_cast<double>(i);
  const auto hu = spdc::marginal_density(s.unfiltered, spdc::Polarization::H, grid);
  const auto vu = spdc::marginal_density(s.unfiltered, spdc::Polarization::V, grid);
  const auto hf = spdc::marginal_density(s.filtered, spdc::Polarization::H, grid);
  const auto vf = spdc::marginal_density(s.filtered, spdc::Polarization::V, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv += format_double(grid[i]) + ',' + format_double(hu[i]) + ',' + format_double(vu[i]) + ',' +
           format_double(hf[i]) + ',' + format_double(vf[i]) + '\n';
  out.write("spectrum.csv", csv);

  const double mu = counting::mean_pairs_per_window(cfg.source);
  report.json["derived"] = {
      {"coherence_time_ps", s.coherence_time_ps},
      {"bandwidth_ghz", s.bandwidth_ghz},
      {"mu", mu},
  };
  report.json["outputs"] = {
      {"sideband_fraction_unfiltered", s.unfiltered.sideband_fraction()},
      {"sideband_fraction_filtered", s.filtered.sideband_fraction()},
      {"transmitted_fraction", s.transmitted_fraction},
      {"v0_unfiltered", s.unfiltered.indistinguishability()},
      {"v0", s.v0},
      {"filter_enabled", cfg.filter_enabled},
  };
  add_summary(report, "sideband fraction (unfiltered)", s.unfiltered.sideband_fraction());
  add_summary(report, "sideband fraction (filtered)", s.filtered.sideband_fraction());
  add_summary(report, "v0", s.v0);
  add_summary(report, "coherence time", s.coherence_time_ps, "ps");
  finish_report(report, out);
  return report;
}

RunReport cmd_hom(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("hom", cfg);
  Output out(report, out_dir);
  const SourceState s = derive_source(cfg);
  const CampaignLevels lv = campaign_levels(cfg);
  const interference::Wavepacket wp{s.coherence_time_ps};
  const auto delays = linspace(cfg.hom.delay_min_ps, cfg.hom.delay_max_ps, cfg.hom.points);

  report.json["derived"] = {
      {"coherence_time_ps", s.coherence_time_ps},
      {"v0", s.v0},
      {"accidental_fraction", lv.fraction},
      {"accidental_rate_cps", lv.accidental_cps},
      {"dip_fwhm_model_ps", interference::hom_dip_fwhm(wp)},
      {"dip_fwhm_measured_reference_ps", kMeasuredDipFwhmPs},
      {"expected_visibility",
       visibility_json(counting::visibility_net(lv.accidental_cps + lv.signal_cps,
                                                lv.accidental_cps + lv.signal_cps * (1.0 - s.v0),
                                                lv.accidental_cps))},
  };

  ordered_json users = ordered_json::object();
  const std::array<std::pair<const char*, double>, 2> centers{
      std::pair{"a", cfg.interference.dip_center_a_ps},
      std::pair{"b", cfg.interference.dip_center_b_ps}};
  for (std::size_t u = 0; u < centers.size(); ++u) {
    const auto scan = interference::hom_scan(wp, delays, s.v0, centers[u].second);
    std::vector<double> counts;
    for (std::size_t i = 0; i < delays.size(); ++i) {
      const double rate = lv.accidental_cps + lv.signal_cps * 2.0 * scan.coincidence_probability[i];
      counts.push_back(sample_counts(cfg, kStreamHom + (u << 20) + i, rate));
    }
    const auto raw = fitting::ScanData::from_counts(delays, counts, cfg.campaign.integration_s);
    out.write(std::string("hom_scan_") + centers[u].first + ".csv", fitting::scan_csv(raw, "delay_ps"));

    const auto fit_raw = fitting::fit_dip(raw);
    const auto fit_net = fitting::fit_dip(fitting::net_correct(raw, lv.accidental_cps));
    const auto& primary = cfg.campaign.net ? fit_net : fit_raw;
    users[centers[u].first] = {
        {"dip_center_ps", centers[u].second},
        {"fit_raw", fit_to_json(fit_raw)},
        {"fit_net", fit_to_json(fit_net)},
        {"visibility_raw", fit_raw.param("V")},
        {"visibility_raw_error", fit_raw.error("V")},
        {"visibility_net", fit_net.param("V")},
        {"visibility_net_error", fit_net.error("V")},
        {"dip_fwhm_fit_ps", primary.param("w")},
        {"dip_fwhm_fit_error_ps", primary.error("w")},
        {"dip_fwhm_over_coherence_time", primary.param("w") / s.coherence_time_ps},
    };
    const std::string tag = std::string("user ") + centers[u].first;
    add_summary(report, tag + " V_raw", fit_raw.param("V"));
    add_summary(report, tag + " V_net", fit_net.param("V"));
    add_summary(report, tag + " dip FWHM", primary.param("w"), "ps");
  }
  report.json["outputs"] = {{"users", users},
                            {"dip_width_note",
                             "model FWHM differs from the measured reference width"}};
  finish_report(report, out);
  return report;
}

RunReport cmd_bell(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("bell", cfg);
  Output out(report, out_dir);
  const SourceState s = derive_source(cfg);
  const CampaignLevels lv = campaign_levels(cfg);
  const double phi_channels = cfg.interference.phi_a_rad + cfg.interference.phi_b_rad;
  const double sb = interference::sb_balance(cfg.interference.phi_a_rad, cfg.interference.phi_b_rad);
  const double phi_total = wrap_two_pi(phi_channels + sb);

  std::vector<double> bob;
  for (int i = 0; i < cfg.bell.points; ++i) bob.push_back(cfg.bell.bob_start_deg + i * cfg.bell.bob_step_deg);

  std::vector<fitting::FringeFit> raw_fits;
  std::vector<fitting::FringeFit> net_fits;
  ordered_json fringes = ordered_json::array();
  for (std::size_t k = 0; k < cfg.bell.alice_hwp_deg.size(); ++k) {
    const double ta = cfg.bell.alice_hwp_deg[k];
    const auto scan = interference::bell_scan(s.coherence, phi_total, ta, bob);
    std::vector<double> counts;
    for (std::size_t i = 0; i < bob.size(); ++i) {
      const double rate = lv.accidental_cps + lv.signal_cps * 4.0 * scan.coincidence_probability[i];
      counts.push_back(sample_counts(cfg, kStreamBell + (k << 20) + i, rate));
    }
    const auto raw = fitting::ScanData::from_counts(bob, counts, cfg.campaign.integration_s);
    out.write("bell_fringe_" + std::to_string(k) + ".csv", fitting::scan_csv(raw, "bob_hwp_deg"));

    const auto fit_raw = fitting::fit_fringe(raw);
    const auto fit_net = fitting::fit_fringe(fitting::net_correct(raw, lv.accidental_cps));
    raw_fits.push_back({ta, fit_raw});
    net_fits.push_back({ta, fit_net});
    fringes.push_back({
        {"alice_hwp_deg", ta},
        {"basis", interference::to_string(scan.basis_tag)},
        {"file", "bell_fringe_" + std::to_string(k) + ".csv"},
        {"visibility_model", interference::fringe_visibility(scan.coincidence_probability)},
        {"fit_raw", fit_to_json(fit_raw)},
        {"fit_net", fit_to_json(fit_net)},
        {"visibility_raw", fit_raw.param("V")},
        {"visibility_raw_error", fit_raw.error("V")},
        {"visibility_net", fit_net.param("V")},
        {"visibility_net_error", fit_net.error("V")},
    });
    const std::string tag = "fringe alice_hwp=" + format_double(ta);
    add_summary(report, tag + " V_raw", fit_raw.param("V"));
    add_summary(report, tag + " V_net", fit_net.param("V"));
  }

  const auto chsh_raw = fitting::chsh_from_fits(raw_fits);
  const auto chsh_net = fitting::chsh_from_fits(net_fits);
  const auto chsh_model =
      interference::chsh_from_state(optics::make_psi_state(s.coherence, phi_total));

  report.json["derived"] = {
      {"v0", s.v0},
      {"coherence_time_ps", s.coherence_time_ps},
      {"compensator_setpoint_ps", s.tau_set_ps},
      {"state_coherence", s.coherence},
      {"channel_phase_rad", phi_channels},
      {"sb_phase_rad", sb},
      {"residual_phase_rad", phi_total},
      {"accidental_fraction", lv.fraction},
      {"accidental_rate_cps", lv.accidental_cps},
  };
  report.json["outputs"] = {
      {"fringes", fringes},
      {"chsh_model", chsh_to_json(chsh_model)},
      {"chsh_raw", chsh_to_json(chsh_raw)},
      {"chsh_net", chsh_to_json(chsh_net)},
      {"chsh", chsh_to_json(cfg.campaign.net ? chsh_net : chsh_raw)},
      {"chsh_source", cfg.campaign.net ? "net" : "raw"},
  };
  const auto& chsh = cfg.campaign.net ? chsh_net : chsh_raw;
  add_summary(report, std::string("S (") + (cfg.campaign.net ? "net" : "raw") + ")", chsh.S);
  add_summary(report, "S std error", chsh.std_error);
  add_summary(report, "violation", chsh.n_sigma_violation, "sigma");
  finish_report(report, out);
  return report;
}

RunReport cmd_chsh(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("chsh", cfg);
  Output out(report, out_dir);
  const SourceState s = derive_source(cfg);
  const CampaignLevels lv = campaign_levels(cfg);
  const double sb = interference::sb_balance(cfg.interference.phi_a_rad, cfg.interference.phi_b_rad);
  const double phi_total =
      wrap_two_pi(cfg.interference.phi_a_rad + cfg.interference.phi_b_rad + sb);
  const auto rho = optics::make_psi_state(s.coherence, phi_total);
  const interference::ChshSettings set;
  const double t = cfg.campaign.integration_s;

  // Direct measurement: four coincidence counts per setting pair.
  const std::array<std::pair<double, double>, 4> pairs{
      std::pair{set.a, set.b}, {set.a, set.b_prime}, {set.a_prime, set.b},
      {set.a_prime, set.b_prime}};
  std::array<double, 4> e_raw{};
  std::array<double, 4> e_raw_err{};
  std::array<double, 4> e_net{};
  std::array<double, 4> e_net_err{};
  std::string csv = "alice_deg,bob_deg,alice_perp,bob_perp,counts\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [a, b] = pairs[k];
    std::array<double, 4> n{};
    const std::array<std::pair<double, double>, 4> settings{
        std::pair{a, b}, {a, b + 90.0}, {a + 90.0, b}, {a + 90.0, b + 90.0}};
    for (std::size_t j = 0; j < 4; ++j) {
      const double p = optics::coincidence_prob(rho, settings[j].first, settings[j].second);
      n[j] = sample_counts(cfg, kStreamChsh + (k << 20) + j, lv.accidental_cps + lv.signal_cps * 4.0 * p);
      csv += format_double(a) + ',' + format_double(b) + ',' + std::to_string(j >> 1) + ',' +
             std::to_string(j & 1) + ',' + format_double(n[j]) + '\n';
    }
    const interference::CoincidenceQuad q_raw{n[0] / t, n[1] / t, n[2] / t, n[3] / t};
    e_raw[k] = interference::correlation_E(q_raw);
    e_raw_err[k] = interference::correlation_E_error(q_raw, t);

    // Net: subtract accidentals, keep the raw Poisson variance.
    std::array<double, 4> m{};
    for (std::size_t j = 0; j < 4; ++j) m[j] = std::max(0.0, n[j] - lv.accidental_cps * t);
    const double total = m[0] + m[1] + m[2] + m[3];
    require(total > 0.0, ErrorCode::no_signal, "no coincidences left after accidental subtraction");
    e_net[k] = (m[0] + m[3] - m[1] - m[2]) / total;
    double var = 0.0;
    const std::array<double, 4> sign{1.0, -1.0, -1.0, 1.0};
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = (sign[j] - e_net[k]) / total;
      var += d * d * n[j];
    }
    e_net_err[k] = std::sqrt(var);
  }
  out.write("chsh_counts.csv", csv);

  const auto model = interference::chsh_from_state(rho, set);
  const auto raw = interference::chsh_S(e_raw, e_raw_err);
  const auto net = interference::chsh_S(e_net, e_net_err);
  auto e_json = [](const std::array<double, 4>& e, const std::array<double, 4>& err) {
    ordered_json j = ordered_json::array();
    for (std::size_t k = 0; k < 4; ++k) j.push_back({{"E", e[k]}, {"std_error", err[k]}});
    return j;
  };
  report.json["derived"] = {
      {"state_coherence", s.coherence},
      {"residual_phase_rad", phi_total},
      {"accidental_fraction", lv.fraction},
      {"settings_deg", {{"a", set.a}, {"a_prime", set.a_prime}, {"b", set.b}, {"b_prime", set.b_prime}}},
  };
  report.json["outputs"] = {
      {"chsh_model", chsh_to_json(model)},
      {"chsh_model_raw_level", model.S * (1.0 - lv.fraction)},
      {"correlations_raw", e_json(e_raw, e_raw_err)},
      {"correlations_net", e_json(e_net, e_net_err)},
      {"chsh_raw", chsh_to_json(raw)},
      {"chsh_net", chsh_to_json(net)},
      {"chsh", chsh_to_json(cfg.campaign.net ? net : raw)},
      {"chsh_source", cfg.campaign.net ? "net" : "raw"},
  };
  const auto& sel = cfg.campaign.net ? net : raw;
  add_summary(report, "S (model)", model.S);
  add_summary(report, std::string("S (") + (cfg.campaign.net ? "net" : "raw") + ")", sel.S);
  add_summary(report, "violation", sel.n_sigma_violation, "sigma");
  finish_report(report, out);
  return report;
}

RunReport cmd_rates(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport report = start_report("rates", cfg);
  Output out(report, out_dir);
  const double mu = counting::mean_pairs_per_window(cfg.source);
  const auto configured = counting::expected_rates(cfg.source, cfg.detector_a, cfg.detector_b);

  auto breakdown_json = [](const counting::RateBreakdown& r) {
    return ordered_json{
        {"singles_a_cps", r.rates.singles_a},
        {"singles_b_cps", r.rates.singles_b},
        {"coincidences_cps", r.rates.coincidences},
        {"true_coincidences_cps", r.true_coincidences},
        {"accidentals_cps", r.rates.accidentals},
        {"dark_accidentals_cps", r.dark_accidentals},
        {"photon_accidentals_cps", r.photon_accidentals},
        {"detection_a", r.detection_a},
        {"detection_b", r.detection_b},
        {"dark_prob_window_a", r.dark_window_a},
        {"dark_prob_window_b", r.dark_window_b},
    };
  };

  ordered_json calibration = nullptr;
  counting::SourceBudget mc_budget = cfg.source;
  std::string mc_budget_label = "configured";
  try {
    const auto cal = counting::calibrate_losses(cfg.source, cfg.detector_a, cfg.detector_b,
                                                cfg.target_singles_cps, cfg.target_coincidences_cps);
    calibration = {
        {"status", "fitted to the calibration targets; not a prediction"},
        {"loss_a_db", cal.loss_a_db},
        {"loss_b_db", cal.loss_b_db},
        {"rates", breakdown_json(cal.fitted)},
        {"accidental_fraction", cal.fitted.rates.coincidences > 0.0
                                    ? cal.fitted.rates.accidentals / cal.fitted.rates.coincidences
                                    : 0.0},
    };
    mc_budget.loss_a_db = cal.loss_a_db;
    mc_budget.loss_b_db = cal.loss_b_db;
    mc_budget_label = "calibrated";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_solution) throw;
    calibration = {{"status", "targets not reachable"}, {"message", e.what()}};
  }

  ordered_json mc = nullptr;
  if (cfg.campaign.monte_carlo) {
    const auto analytic = counting::expected_rates(mc_budget, cfg.detector_a, cfg.detector_b);
    const auto run = counting::simulate_counts(mc_budget, cfg.detector_a, cfg.detector_b,
                                               counting::AnalyzerModel::none(), cfg.mc_windows,
                                               cfg.seed ^ kStreamRates);
    const auto rates = run.rates(cfg.source.window_ns);
    const double exposure = static_cast<double>(cfg.mc_windows) * cfg.source.window_ns * 1e-9;
    auto z = [&](double mc_rate, double an_rate) {
      const double expected = an_rate * exposure;
      return expected > 0.0 ? (mc_rate - an_rate) * exposure / std::sqrt(expected) : 0.0;
    };
    mc = {
        {"budget", mc_budget_label},
        {"windows", cfg.mc_windows},
        {"tallies",
         {{"neither", run.tallies.neither},
          {"a_only", run.tallies.a_only},
          {"b_only", run.tallies.b_only},
          {"both", run.tallies.both},
          {"true_both", run.tallies.true_both}}},
        {"singles_a_cps", rates.singles_a},
        {"singles_b_cps", rates.singles_b},
        {"coincidences_cps", rates.coincidences},
        {"accidentals_cps", rates.accidentals},
        {"z_singles_a", z(rates.singles_a, analytic.rates.singles_a)},
        {"z_singles_b", z(rates.singles_b, analytic.rates.singles_b)},
        {"z_coincidences", z(rates.coincidences, analytic.rates.coincidences)},
        {"z_accidentals", z(rates.accidentals, analytic.rates.accidentals)},
    };
    add_summary(report, "MC coincidences", rates.coincidences, "cps");
  }

  report.json["derived"] = {
      {"mu", mu},
      {"pair_rate_per_s", cfg.source.pair_rate()},
      {"filter_bandwidth_ghz", cfg.source.filter_bandwidth_ghz},
  };
  report.json["outputs"] = {
      {"configured_losses", breakdown_json(configured)},
      {"calibration", calibration},
      {"monte_carlo", mc},
  };
  report.json["calibration_targets"] = calibration_targets_json(cfg);
  add_summary(report, "mu", mu);
  add_summary(report, "singles A (configured losses)", configured.rates.singles_a, "cps");
  add_summary(report, "coincidences (configured losses)", configured.rates.coincidences, "cps");
  report.summary.push_back("conversion efficiency " + format_sig6(cfg.conversion_efficiency) +
                           " and singles " + format_sig6(cfg.target_singles_cps) +
                           " cps are calibration targets, not predictions");
  finish_report(report, out);
  return report;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"qpm", "spectrum", "hom", "bell", "chsh", "rates"};
  return names;
}

RunReport run(const std::string& experiment, const ExperimentConfig& cfg,
              const std::filesystem::path& out_dir) {
  if (experiment == "qpm") return cmd_qpm(cfg, out_dir);
  if (experiment == "spectrum") return cmd_spectrum(cfg, out_dir);
  if (experiment == "hom") return cmd_hom(cfg, out_dir);
  if (experiment == "bell") return cmd_bell(cfg, out_dir);
  if (experiment == "chsh") return cmd_chsh(cfg, out_dir);
  if (experiment == "rates") return cmd_rates(cfg, out_dir);
  throw Error(ErrorCode::invalid_argument, "unknown experiment '" + experiment + "'");
}

}  // namespace ppln::experiments
