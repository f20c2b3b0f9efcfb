// pplnsim: command-line front end over the C interface in ppln/ppln.h.

#include "ppln/ppln.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string command;
  std::string config_path;
  std::optional<long long> seed;
  std::string out_dir;
  bool no_mc = false;
  bool net = false;
  std::optional<int> points;
  std::optional<double> integration_s;
  bool no_timestamp = false;
  bool print_json = false;
  std::vector<std::string> overrides;
};

int fail(ppln_status status, const std::string& message) {
  nlohmann::ordered_json err{
      {"error", {{"status", ppln_status_name(status)}, {"code", static_cast<int>(status)},
                 {"message", message}}}};
  std::cout << err.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) << std::endl;
  return static_cast<int>(status);
}

int fail_last(ppln_status status) { return fail(status, ppln_last_error()); }

class ConfigHandle {
 public:
  ~ConfigHandle() { ppln_config_destroy(cfg_); }
  ppln_config** out() { return &cfg_; }
  ppln_config* get() const { return cfg_; }

 private:
  ppln_config* cfg_ = nullptr;
};

int run(const Options& opt) {
  ConfigHandle cfg;
  ppln_status st = opt.config_path.empty() ? ppln_config_create(cfg.out())
                                           : ppln_config_load(opt.config_path.c_str(), cfg.out());
  if (st != PPLN_OK) return fail_last(st);

  std::vector<std::pair<std::string, std::string>> sets;
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      return fail(PPLN_ERR_INVALID_ARGUMENT, "--set expects key=value, got '" + kv + "'");
    sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.seed) sets.emplace_back("seed", std::to_string(*opt.seed));
  if (opt.no_mc) sets.emplace_back("campaign.monte_carlo", "false");
  if (opt.net) sets.emplace_back("campaign.net", "true");
  if (opt.integration_s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *opt.integration_s);
    sets.emplace_back("campaign.integration_s", buf);
  }
  if (opt.points) {
    if (opt.command != "hom" && opt.command != "bell")
      return fail(PPLN_ERR_INVALID_ARGUMENT, "--points applies to hom and bell only");
    sets.emplace_back(opt.command + ".points", std::to_string(*opt.points));
  }
  if (opt.no_timestamp) sets.emplace_back("output.timestamp", "false");
  for (const auto& [k, v] : sets) {
    st = ppln_config_set(cfg.get(), k.c_str(), v.c_str());
    if (st != PPLN_OK) return fail_last(st);
  }

  ppln_report* report = nullptr;
  st = ppln_run(cfg.get(), opt.command.c_str(), opt.out_dir.empty() ? nullptr : opt.out_dir.c_str(),
                &report);
  if (st != PPLN_OK) return fail_last(st);

  if (opt.print_json) {
    std::cout << ppln_report_json(report) << std::endl;
  } else {
    std::cout << opt.command << " (pplnsim " << ppln_version() << ")\n";
    for (size_t i = 0; i < ppln_report_summary_count(report); ++i)
      std::cout << "  " << ppln_report_summary_line(report, i) << '\n';
    for (size_t i = 0; i < ppln_report_file_count(report); ++i)
      std::cout << "  wrote " << ppln_report_file(report, i) << '\n';
    std::cout.flush();
  }
  ppln_report_destroy(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Type-II PPLN waveguide entangled-pair source simulator"};
  app.set_version_flag("--version", std::string(ppln_version()));
  app.require_subcommand(1);

  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"qpm", "calibrate dispersion and compute poling periods and the tuning curve"},
      {"spectrum", "emission spectrum before and after the Bragg filter"},
      {"hom", "HOM-type dip scan at both users, with fits"},
      {"bell", "Bell fringes in the H/V and D/A bases, fits and CHSH"},
      {"chsh", "direct CHSH measurement at the canonical settings"},
      {"rates", "singles, coincidence and accidental rate budget"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "random seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", opt.out_dir, "output directory for CSV and JSON");
    sub->add_flag("--no-mc", opt.no_mc, "analytic expectations only, no Monte Carlo counts");
    sub->add_flag("--net", opt.net, "report accidental-subtracted results as primary");
    sub->add_option("--points", opt.points, "scan points (hom, bell)")->check(CLI::PositiveNumber);
    sub->add_option("--integration-s", opt.integration_s, "integration time per point in s")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--no-timestamp", opt.no_timestamp, "omit the generation time from reports");
    sub->add_flag("--json", opt.print_json, "print the full JSON report");
    sub->add_option("--set", opt.overrides, "override a configuration key (key=value)");
    sub->callback([&opt, name = name] { opt.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(PPLN_ERR_INVALID_ARGUMENT, e.what());
  }
  return run(opt);
}
