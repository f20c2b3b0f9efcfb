#include "ppln/ppln.h"

#include "ppln/error.hpp"
#include "ppln/experiments.hpp"

#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <vector>

struct ppln_config {
  ppln::KeyValueFile kv;
  std::filesystem::path base_dir;
};

struct ppln_report {
  std::string json;
  std::vector<std::string> summary;
  std::vector<std::string> files;
};

namespace {

thread_local std::string g_last_error;

ppln_status status_of(ppln::ErrorCode code) {
  switch (code) {
    case ppln::ErrorCode::invalid_argument: return PPLN_ERR_INVALID_ARGUMENT;
    case ppln::ErrorCode::out_of_range: return PPLN_ERR_OUT_OF_RANGE;
    case ppln::ErrorCode::no_solution: return PPLN_ERR_NO_SOLUTION;
    case ppln::ErrorCode::no_convergence: return PPLN_ERR_NO_CONVERGENCE;
    case ppln::ErrorCode::io: return PPLN_ERR_IO;
    case ppln::ErrorCode::parse: return PPLN_ERR_PARSE;
    case ppln::ErrorCode::no_signal: return PPLN_ERR_NO_SIGNAL;
  }
  return PPLN_ERR_INTERNAL;
}

template <class F>
ppln_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return PPLN_OK;
  } catch (const ppln::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return PPLN_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) throw ppln::Error(ppln::ErrorCode::invalid_argument, std::string(what) + " is null");
}

ppln::experiments::ExperimentConfig build(const ppln_config* c) {
  return ppln::experiments::ExperimentConfig::from_keyvalues(c->kv, c->base_dir);
}

}  // namespace

extern "C" {

const char* ppln_version(void) { return ppln::experiments::version(); }

const char* ppln_last_error(void) { return g_last_error.c_str(); }

const char* ppln_status_name(ppln_status status) {
  switch (status) {
    case PPLN_OK: return "ok";
    case PPLN_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case PPLN_ERR_OUT_OF_RANGE: return "out_of_range";
    case PPLN_ERR_NO_SOLUTION: return "no_solution";
    case PPLN_ERR_NO_CONVERGENCE: return "no_convergence";
    case PPLN_ERR_IO: return "io";
    case PPLN_ERR_PARSE: return "parse";
    case PPLN_ERR_NO_SIGNAL: return "no_signal";
    case PPLN_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

ppln_status ppln_config_create(ppln_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ppln_config{};
  });
}

ppln_status ppln_config_load(const char* path, ppln_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto cfg = std::make_unique<ppln_config>();
    cfg->kv = ppln::KeyValueFile::load(path);
    if (!cfg->kv.contains("schema_version"))
      throw ppln::Error(ppln::ErrorCode::parse, std::string(path) + ": missing schema_version");
    cfg->base_dir = std::filesystem::path(path).parent_path();
    build(cfg.get());
    *out = cfg.release();
  });
}

ppln_status ppln_config_set(ppln_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    ppln_config trial = *config;
    trial.kv.set(key, value);
    build(&trial);
    *config = std::move(trial);
  });
}

ppln_status ppln_config_get(const ppln_config* config, const char* key, char* buf,
                            size_t buf_size, size_t* needed) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    const auto kv = build(config).to_keyvalues();
    const auto v = kv.find(key);
    if (!v) throw ppln::Error(ppln::ErrorCode::invalid_argument, std::string("unknown key '") + key + "'");
    if (needed) *needed = v->size() + 1;
    if (buf) {
      if (buf_size < v->size() + 1)
        throw ppln::Error(ppln::ErrorCode::invalid_argument, "buffer too small");
      std::memcpy(buf, v->c_str(), v->size() + 1);
    }
  });
}

void ppln_config_destroy(ppln_config* config) { delete config; }

ppln_status ppln_run(const ppln_config* config, const char* experiment, const char* out_dir,
                     ppln_report** out) {
  return guarded([&] {
    need(config, "config");
    need(experiment, "experiment");
    need(out, "out");
    const auto cfg = build(config);
    const auto r = ppln::experiments::run(experiment, cfg,
                                          out_dir ? std::filesystem::path(out_dir)
                                                  : std::filesystem::path());
    auto rep = std::make_unique<ppln_report>();
    rep->json = r.json.dump(2);
    rep->summary = r.summary;
    for (const auto& f : r.files) rep->files.push_back(f.string());
    *out = rep.release();
  });
}

const char* ppln_report_json(const ppln_report* report) {
  return report ? report->json.c_str() : nullptr;
}

size_t ppln_report_summary_count(const ppln_report* report) {
  return report ? report->summary.size() : 0;
}

const char* ppln_report_summary_line(const ppln_report* report, size_t index) {
  if (!report || index >= report->summary.size()) return nullptr;
  return report->summary[index].c_str();
}

size_t ppln_report_file_count(const ppln_report* report) {
  return report ? report->files.size() : 0;
}

const char* ppln_report_file(const ppln_report* report, size_t index) {
  if (!report || index >= report->files.size()) return nullptr;
  return report->files[index].c_str();
}

void ppln_report_destroy(ppln_report* report) { delete report; }

ppln_status ppln_coherence_time_ps(double lambda_nm, double fwhm_nm, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ppln::spdc::coherence_time(lambda_nm, fwhm_nm);
  });
}

ppln_status ppln_bandwidth_ghz(double lambda_nm, double fwhm_nm, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ppln::spdc::bandwidth_ghz(lambda_nm, fwhm_nm);
  });
}

ppln_status ppln_mean_pairs_per_window(double brightness, double pump_power_mw,
                                       double bandwidth_ghz, double window_ns, double* out) {
  return guarded([&] {
    need(out, "out");
    ppln::counting::SourceBudget b;
    b.brightness = brightness;
    b.pump_power_mw = pump_power_mw;
    b.filter_bandwidth_ghz = bandwidth_ghz;
    b.window_ns = window_ns;
    *out = ppln::counting::mean_pairs_per_window(b);
  });
}

ppln_status ppln_mode_overlap(double coherence_time_ps, double delay_ps, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ppln::interference::mode_overlap({coherence_time_ps}, delay_ps);
  });
}

ppln_status ppln_hom_coincidence(double alpha_deg, double overlap, double v0, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ppln::interference::hom_coincidence(alpha_deg, overlap, v0);
  });
}

ppln_status ppln_coincidence_prob(double coherence, double phi_rad, double alpha_deg,
                                  double beta_deg, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = ppln::optics::coincidence_prob(ppln::optics::make_psi_state(coherence, phi_rad),
                                          alpha_deg, beta_deg);
  });
}

ppln_status ppln_chsh_from_state(double coherence, double phi_rad, double* s_out) {
  return guarded([&] {
    need(s_out, "s_out");
    *s_out = ppln::interference::chsh_from_state(ppln::optics::make_psi_state(coherence, phi_rad)).S;
  });
}

ppln_status ppln_visibility_net(double r_max, double r_min, double r_acc, double* net_out,
                                double* raw_out) {
  return guarded([&] {
    need(net_out, "net_out");
    need(raw_out, "raw_out");
    const auto v = ppln::counting::visibility_net(r_max, r_min, r_acc);
    *net_out = v.net;
    *raw_out = v.raw;
  });
}

ppln_status ppln_degenerate_period(const char* dispersion_path, double pump_nm,
                                   double temperature_c, int calibrate, double* out) {
  return guarded([&] {
    need(dispersion_path, "dispersion_path");
    need(out, "out");
    auto model = ppln::spdc::DispersionModel::load(dispersion_path);
    if (calibrate) model = ppln::spdc::calibrate_offsets(model);
    *out = ppln::spdc::find_degenerate_period(model, pump_nm, temperature_c).period_um;
  });
}

}  // extern "C"
