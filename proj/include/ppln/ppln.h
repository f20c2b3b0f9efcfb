/* C interface to the PPLN entangled-pair source simulator.
 *
 * Every function that can fail returns a ppln_status. On failure a message is
 * available from ppln_last_error() on the calling thread until the next call
 * into the library from that thread. Output pointers are written only on
 * success. Handles are not thread-safe; distinct handles may be used from
 * different threads.
 */
#ifndef PPLN_PPLN_H
#define PPLN_PPLN_H

#include <stddef.h>

#if defined(PPLN_BUILDING_LIBRARY)
#define PPLN_API __attribute__((visibility("default")))
#else
#define PPLN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ppln_status {
  PPLN_OK = 0,
  PPLN_ERR_INVALID_ARGUMENT = 1,
  PPLN_ERR_OUT_OF_RANGE = 2,
  PPLN_ERR_NO_SOLUTION = 3,
  PPLN_ERR_NO_CONVERGENCE = 4,
  PPLN_ERR_IO = 5,
  PPLN_ERR_PARSE = 6,
  PPLN_ERR_NO_SIGNAL = 7,
  PPLN_ERR_INTERNAL = 99
} ppln_status;

typedef struct ppln_config ppln_config;
typedef struct ppln_report ppln_report;

PPLN_API const char* ppln_version(void);
PPLN_API const char* ppln_last_error(void);
/* Stable identifier such as "no_solution". */
PPLN_API const char* ppln_status_name(ppln_status status);

/* Configuration. A fresh config holds the built-in defaults. */
PPLN_API ppln_status ppln_config_create(ppln_config** out);
PPLN_API ppln_status ppln_config_load(const char* path, ppln_config** out);
/* Rejected (and not applied) when the key is unknown or the value invalid. */
PPLN_API ppln_status ppln_config_set(ppln_config* config, const char* key, const char* value);
/* Copies the effective value of `key` into buf (NUL-terminated). *needed, when
 * non-null, receives the required size including the terminator. */
PPLN_API ppln_status ppln_config_get(const ppln_config* config, const char* key, char* buf,
                                     size_t buf_size, size_t* needed);
PPLN_API void ppln_config_destroy(ppln_config* config);

/* Experiments: "qpm", "spectrum", "hom", "bell", "chsh", "rates".
 * out_dir may be NULL to skip writing files. */
PPLN_API ppln_status ppln_run(const ppln_config* config, const char* experiment,
                              const char* out_dir, ppln_report** out);
PPLN_API const char* ppln_report_json(const ppln_report* report);
PPLN_API size_t ppln_report_summary_count(const ppln_report* report);
PPLN_API const char* ppln_report_summary_line(const ppln_report* report, size_t index);
PPLN_API size_t ppln_report_file_count(const ppln_report* report);
PPLN_API const char* ppln_report_file(const ppln_report* report, size_t index);
PPLN_API void ppln_report_destroy(ppln_report* report);

/* Primitives. Wavelengths in nm, times in ps, angles in degrees, phases in rad. */
PPLN_API ppln_status ppln_coherence_time_ps(double lambda_nm, double fwhm_nm, double* out);
PPLN_API ppln_status ppln_bandwidth_ghz(double lambda_nm, double fwhm_nm, double* out);
PPLN_API ppln_status ppln_mean_pairs_per_window(double brightness, double pump_power_mw,
                                                double bandwidth_ghz, double window_ns,
                                                double* out);
PPLN_API ppln_status ppln_mode_overlap(double coherence_time_ps, double delay_ps, double* out);
PPLN_API ppln_status ppln_hom_coincidence(double alpha_deg, double overlap, double v0,
                                          double* out);
PPLN_API ppln_status ppln_coincidence_prob(double coherence, double phi_rad, double alpha_deg,
                                           double beta_deg, double* out);
PPLN_API ppln_status ppln_chsh_from_state(double coherence, double phi_rad, double* s_out);
PPLN_API ppln_status ppln_visibility_net(double r_max, double r_min, double r_acc,
                                         double* net_out, double* raw_out);
/* Degenerate poling period in um. With calibrate != 0 the dispersion file is
 * first calibrated to the built-in design anchor. */
PPLN_API ppln_status ppln_degenerate_period(const char* dispersion_path, double pump_nm,
                                            double temperature_c, int calibrate, double* out);

#ifdef __cplusplus
}
#endif

#endif /* PPLN_PPLN_H */
