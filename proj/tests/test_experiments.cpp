#include "oracles/oracles.hpp"
#include "ppln/error.hpp"
#include "ppln/experiments.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace ppln;
using namespace ppln::experiments;

namespace {

const std::filesystem::path kConfig = PPLN_TEST_CONFIG_DIR "/paper.config";

ExperimentConfig paper() {
  auto cfg = ExperimentConfig::load(kConfig);
  cfg.mc_windows = 200'000;
  cfg.timestamp = false;
  return cfg;
}

ExperimentConfig with(const std::string& key, const std::string& value) {
  auto kv = KeyValueFile::load(kConfig);
  kv.set(key, value);
  auto cfg = ExperimentConfig::from_keyvalues(kv, kConfig.parent_path());
  cfg.mc_windows = 200'000;
  cfg.timestamp = false;
  return cfg;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("configuration loading") {
  const auto cfg = ExperimentConfig::load(kConfig);
  CHECK(std::filesystem::exists(cfg.dispersion_file));
  CHECK(cfg.qpm.poling_period_um == 6.6);
  CHECK(cfg.qpm.pump_nm == 655.0);
  CHECK(cfg.bell.alice_hwp_deg == std::vector<double>{0.0, 22.5, 45.0, 67.5});
  CHECK_FALSE(cfg.interference.coherence_time_ps.has_value());
  CHECK(cfg.campaign.accidental_fraction == 0.17);
  CHECK(cfg.source.filter_bandwidth_ghz == doctest::Approx(87.35).epsilon(1e-3));
  CHECK_NOTHROW(ExperimentConfig::defaults().validate());

  const auto shipped = KeyValueFile::load(kConfig);
  for (const auto& [k, v] : shipped.values())
    CHECK(std::find(known_keys().begin(), known_keys().end(), k) != known_keys().end());
}

TEST_CASE("configuration round trip through key-value text") {
  const auto cfg = ExperimentConfig::load(kConfig);
  const auto kv = cfg.to_keyvalues();
  const auto again = ExperimentConfig::from_keyvalues(kv);
  CHECK(again.to_keyvalues().values() == kv.values());
}

TEST_CASE("configuration errors") {
  auto kv = KeyValueFile::load(kConfig);
  kv.set("hom.pointz", "3");
  CHECK(code_of([&] { ExperimentConfig::from_keyvalues(kv); }) == ErrorCode::parse);
  CHECK(code_of([] { with("schema_version", "2"); }) == ErrorCode::parse);
  CHECK(code_of([] { with("rng.algorithm", "mt19937"); }) == ErrorCode::parse);
  CHECK(code_of([] { with("qpm.calibrated_polarization", "D"); }) == ErrorCode::parse);
  CHECK(code_of([] { with("hom.points", "0"); }) == ErrorCode::out_of_range);
  CHECK(code_of([] { with("campaign.accidental_fraction", "1.2"); }) == ErrorCode::out_of_range);
  CHECK(code_of([] { with("seed", "-1"); }) == ErrorCode::out_of_range);
  CHECK(code_of([] { with("spectrum.fwhm_nm", "wide"); }) == ErrorCode::parse);
  CHECK(code_of([] { ExperimentConfig::load("/nonexistent/x.config"); }) == ErrorCode::io);
  CHECK(code_of([] { run("laser", paper()); }) == ErrorCode::invalid_argument);
  CHECK(experiment_names().size() == 6);
}

TEST_CASE("qpm command") {
  const auto r = cmd_qpm(paper());
  const auto& out = r.json["outputs"];
  CHECK(out["period_anchor_um"].get<double>() == doctest::Approx(6.6).epsilon(1e-6));
  const double off_v = r.json["derived"]["offset_v"].get<double>();
  CHECK(out["period_design_um"].get<double>() ==
        doctest::Approx(oracle::degenerate_period(780.0, 96.8, 0.0, off_v)).epsilon(1e-6));
  CHECK(std::abs(out["period_design_um"].get<double>() - 9.1) < 0.4);
  CHECK(out["tuning_points"].get<int>() == 141);
}

TEST_CASE("spectrum command") {
  const auto r = cmd_spectrum(paper());
  CHECK(r.json["derived"]["coherence_time_ps"].get<double>() == doctest::Approx(5.03).epsilon(0.01));
  CHECK(std::abs(r.json["derived"]["mu"].get<double>() - 0.098) <= 0.001);
  CHECK(r.json["outputs"]["v0"].get<double>() > 0.98);
  CHECK(r.json["outputs"]["v0_unfiltered"].get<double>() == doctest::Approx(0.85));

  const auto open = cmd_spectrum(with("filter.enabled", "false"));
  CHECK(open.json["outputs"]["v0"].get<double>() == doctest::Approx(0.85).epsilon(1e-6));
}

TEST_CASE("hom command") {
  const auto r = cmd_hom(paper());
  const double tau_c = r.json["derived"]["coherence_time_ps"].get<double>();
  for (const char* user : {"a", "b"}) {
    const auto& u = r.json["outputs"]["users"][user];
    CHECK(u["visibility_raw"].get<double>() == doctest::Approx(0.83).epsilon(0.03));
    CHECK(u["visibility_net"].get<double>() > 0.98);
    CHECK(u["dip_fwhm_fit_ps"].get<double>() / tau_c == doctest::Approx(std::sqrt(2.0)).epsilon(0.03));
  }

  // Without shot noise the fit returns the model exactly.
  const auto clean = cmd_hom(with("campaign.monte_carlo", "false"));
  const auto& a = clean.json["outputs"]["users"]["a"];
  CHECK(a["visibility_net"].get<double>() ==
        doctest::Approx(clean.json["derived"]["expected_visibility"]["net"].get<double>()).epsilon(1e-6));
  CHECK(a["visibility_raw"].get<double>() ==
        doctest::Approx(clean.json["derived"]["expected_visibility"]["raw"].get<double>()).epsilon(1e-6));
}

TEST_CASE("bell and chsh commands") {
  const auto bell = cmd_bell(paper());
  const auto& s = bell.json["outputs"]["chsh"];
  CHECK(std::abs(s["S"].get<double>() - 2.80) <= 0.04);
  CHECK(s["n_sigma_violation"].get<double>() > 25.0);
  CHECK(bell.json["outputs"]["chsh_raw"]["S"].get<double>() > 2.0);
  CHECK(bell.json["derived"]["residual_phase_rad"].get<double>() == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(bell.json["outputs"]["fringes"].size() == 4);

  const auto chsh = cmd_chsh(paper());
  CHECK(std::abs(chsh.json["outputs"]["chsh"]["S"].get<double>() - 2.80) <= 0.04);
  CHECK(chsh.json["outputs"]["chsh"]["n_sigma_violation"].get<double>() > 25.0);
  CHECK(chsh.json["outputs"]["correlations_net"].size() == 4);
}

TEST_CASE("rates command") {
  const auto r = cmd_rates(paper());
  const auto& cal = r.json["outputs"]["calibration"];
  CHECK(cal["rates"]["singles_a_cps"].get<double>() == doctest::Approx(85e3).epsilon(1e-6));
  CHECK(cal["rates"]["coincidences_cps"].get<double>() == doctest::Approx(450.0).epsilon(1e-6));
  CHECK(cal["status"].get<std::string>().find("not a prediction") != std::string::npos);
  for (const char* k : {"conversion_efficiency", "singles_a_cps", "coincidences_cps"})
    CHECK(r.json["calibration_targets"][k]["status"].get<std::string>().find("calibration target") !=
          std::string::npos);
  CHECK(std::abs(r.json["outputs"]["monte_carlo"]["z_singles_a"].get<double>()) < 4.0);
  CHECK(r.json["derived"]["mu"].get<double>() == doctest::Approx(0.0983).epsilon(0.01));
}

TEST_CASE("accidental share of the classical level") {
  auto cfg = paper();
  CHECK(accidental_fraction(cfg) == 0.17);
  cfg.campaign.accidental_fraction.reset();
  const double model = accidental_fraction(cfg);
  CHECK(model > 0.0);
  CHECK(model < 0.17);
  const auto derived = cmd_hom(with("campaign.accidental_fraction", "auto"));
  CHECK(derived.json["derived"]["accidental_fraction"].get<double>() == doctest::Approx(model));
}

TEST_CASE("reports are reproducible and seed dependent") {
  for (const auto& name : experiment_names()) {
    const auto a = run(name, paper());
    const auto b = run(name, paper());
    CHECK_MESSAGE(a.json.dump() == b.json.dump(), name);
    CHECK(a.json["experiment"].get<std::string>() == name);
    CHECK(a.json["seed"].get<std::uint64_t>() == 20100);
  }
  auto other = paper();
  other.seed = 1;
  CHECK(cmd_hom(other).json["outputs"].dump() != cmd_hom(paper()).json["outputs"].dump());
}

TEST_CASE("output directory receives tables and the report") {
  const auto dir = std::filesystem::temp_directory_path() / "ppln_experiments_test";
  std::filesystem::remove_all(dir);
  const auto r = cmd_bell(paper(), dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(r.files.size() >= 5);
  for (const auto& f : r.files) CHECK(std::filesystem::exists(f));
  std::filesystem::remove_all(dir);
}
