#pragma once

// Named experiments driven by a key-value configuration. Each command returns
// a JSON report and, when an output directory is given, writes CSV tables and
// report.json into it.

#include "ppln/counting.hpp"
#include "ppln/fitting.hpp"
#include "ppln/interference.hpp"
#include "ppln/keyvalue.hpp"
#include "ppln/spdc.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ppln::experiments {

inline constexpr int kSchemaVersion = 1;

const char* version();

struct CampaignSettings {
  double integration_s = 60.0;
  // Coincidence rate at the classical level (outside the dip, fringe mean).
  double classical_rate_cps = 450.0;
  // Accidental share of the classical level; empty means derive it from the
  // counting model.
  std::optional<double> accidental_fraction = 0.17;
  bool monte_carlo = true;
  bool net = false;
};

struct HomSettings {
  double delay_min_ps = -20.0;
  double delay_max_ps = 20.0;
  int points = 41;
};

struct BellSettings {
  double bob_start_deg = 0.0;
  double bob_step_deg = 4.5;
  int points = 40;
  std::vector<double> alice_hwp_deg{0.0, 22.5, 45.0, 67.5};
};

struct InterferenceSettings {
  // Overrides the value derived from the filter when set.
  std::optional<double> coherence_time_ps;
  double dip_center_a_ps = 0.0;
  double dip_center_b_ps = 0.0;
  double phi_a_rad = 0.0;
  double phi_b_rad = 0.0;
};

struct ExperimentConfig {
  std::filesystem::path dispersion_file;
  spdc::QpmConfig qpm;
  spdc::Polarization calibrated_polarization = spdc::Polarization::V;
  double design_pump_nm = 780.0;
  spdc::TemperatureRange tuning;

  double spectrum_fwhm_nm = 0.7;
  double sideband_fraction = 0.15;
  double degenerate_center_nm = spdc::kDegenerateCenterNm;
  std::pair<double, double> sideband_centers_nm = spdc::kSidebandCentersNm;
  spdc::LineShape line_shape = spdc::LineShape::gaussian;
  bool filter_enabled = true;
  spdc::FilterSpec filter;

  counting::SourceBudget source;
  counting::DetectorParams detector_a{0.04, 2.2e-5, counting::DetectorMode::free_running, 1.5};
  counting::DetectorParams detector_b{0.10, 1e-5, counting::DetectorMode::gated, 1.5};
  std::uint64_t mc_windows = 10'000'000;
  double target_singles_cps = 85e3;
  double target_coincidences_cps = 450.0;
  double conversion_efficiency = 1.1e-9;

  InterferenceSettings interference;
  HomSettings hom;
  BellSettings bell;
  CampaignSettings campaign;

  std::uint64_t seed = 20100;
  bool timestamp = true;

  // Keys not present keep the defaults above. Unknown keys are rejected.
  static ExperimentConfig from_keyvalues(const KeyValueFile& kv,
                                         const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig defaults();
  KeyValueFile to_keyvalues() const;
  void validate() const;
};

// Every key understood by ExperimentConfig::from_keyvalues.
const std::vector<std::string>& known_keys();

struct RunReport {
  std::string experiment;
  nlohmann::ordered_json json;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> summary;  // human-readable lines
};

// Quantities shared by several commands.
struct SourceState {
  spdc::EmissionSpectrum unfiltered;
  spdc::EmissionSpectrum filtered;
  double transmitted_fraction = 1.0;
  double v0 = 0.0;
  double coherence_time_ps = 0.0;
  double bandwidth_ghz = 0.0;
  double tau_set_ps = 0.0;
  double coherence = 0.0;  // Bell-state C
};

SourceState derive_source(const ExperimentConfig& cfg);

// Accidental share of the classical coincidence level used by the campaigns.
double accidental_fraction(const ExperimentConfig& cfg);

RunReport cmd_qpm(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});
RunReport cmd_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});
RunReport cmd_hom(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});
RunReport cmd_bell(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});
RunReport cmd_chsh(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});
RunReport cmd_rates(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});

RunReport run(const std::string& experiment, const ExperimentConfig& cfg,
              const std::filesystem::path& out_dir = {});
const std::vector<std::string>& experiment_names();

nlohmann::ordered_json fit_to_json(const fitting::FitResult& fit);
nlohmann::ordered_json chsh_to_json(const interference::ChshResult& r);

}  // namespace ppln::experiments
