#ifndef VFCBF_H
#define VFCBF_H

/* C interface to the visual-foresight safety filter stack.
 *
 * Every function returns a vfcbf_status. On failure a message describing the
 * error is available from vfcbf_last_error() on the calling thread until the
 * next failing call on that thread. Handles are opaque and owned by the
 * caller; each has a matching *_free that accepts NULL. */

#include <stddef.h>
#include <stdint.h>

#if defined(VFCBF_BUILDING_LIBRARY)
#define VFCBF_API __attribute__((visibility("default")))
#else
#define VFCBF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vfcbf_status {
  VFCBF_OK = 0,
  VFCBF_ERR_INVALID_ARGUMENT = 1, /* null handle, bad index, unknown key */
  VFCBF_ERR_CONFIG = 2,           /* config failed to parse or validate */
  VFCBF_ERR_IO = 3,               /* file could not be read or written */
  VFCBF_ERR_NETWORK = 4,          /* port unavailable */
  VFCBF_ERR_INTERNAL = 5
} vfcbf_status;

typedef struct vfcbf_config vfcbf_config;
typedef struct vfcbf_run vfcbf_run;
typedef struct vfcbf_sweep vfcbf_sweep;
typedef struct vfcbf_ablation vfcbf_ablation;
typedef struct vfcbf_server vfcbf_server;

typedef struct vfcbf_step_record {
  double t;
  double h_now;
  double h_next; /* NaN when the fallback was applied */
  double delta_u;
  double d_min_true;
  double d_min_rendered;
  double speed;
  int collided;
  double filter_ms;
  int candidates;
} vfcbf_step_record;

typedef struct vfcbf_sweep_summary {
  double value;
  double mean_du;
  double max_du;
  double min_dist_mean;
  double min_dist_lo;
  double min_dist_hi;
  double final_dist_mean;
  int collisions;
} vfcbf_sweep_summary;

typedef struct vfcbf_ablation_entry {
  double d_c;
  int ticks;
  int interventions;
  int fallbacks;
  int collided;
  int h_always_negative;
  int collided_with_negative_h;
} vfcbf_ablation_entry;

typedef struct vfcbf_timing {
  double safe_median_ms;
  double safe_p95_ms;
  double batch_median_ms;
  double batch_p95_ms;
  int safe_predict_calls_max;
  int batch_predict_calls_max;
  int batch_size;
  int max_batches;
  int samples;
} vfcbf_timing;

VFCBF_API const char* vfcbf_version(void);
VFCBF_API const char* vfcbf_last_error(void);
VFCBF_API const char* vfcbf_status_name(vfcbf_status status);

/* Scenario configuration. */
VFCBF_API vfcbf_status vfcbf_config_default(vfcbf_config** out);
VFCBF_API vfcbf_status vfcbf_config_load(const char* path, vfcbf_config** out);
VFCBF_API vfcbf_status vfcbf_config_parse(const char* json_text, vfcbf_config** out);
/* Dotted key such as "cbf.d_c", "cbf.alpha" or "rng_seed". */
VFCBF_API vfcbf_status vfcbf_config_set_number(vfcbf_config* cfg, const char* key, double value);
VFCBF_API vfcbf_status vfcbf_config_get_number(const vfcbf_config* cfg, const char* key, double* value);
/* Depth barriers report collisions as failures; the density ablation does not. */
VFCBF_API vfcbf_status vfcbf_config_uses_depth_barrier(const vfcbf_config* cfg, int* out);
/* Canonical JSON; release with vfcbf_string_free. */
VFCBF_API vfcbf_status vfcbf_config_to_json(const vfcbf_config* cfg, char** out);
VFCBF_API void vfcbf_config_free(vfcbf_config* cfg);
VFCBF_API void vfcbf_string_free(char* s);

/* One scripted run. A negative seed uses the config's rng_seed. */
VFCBF_API vfcbf_status vfcbf_run_scenario(const vfcbf_config* cfg, int64_t seed, vfcbf_run** out);
VFCBF_API vfcbf_status vfcbf_run_record_count(const vfcbf_run* run, size_t* count);
VFCBF_API vfcbf_status vfcbf_run_record(const vfcbf_run* run, size_t index, vfcbf_step_record* out);
VFCBF_API vfcbf_status vfcbf_run_collided(const vfcbf_run* run, int* collided);
VFCBF_API vfcbf_status vfcbf_run_fallback_ticks(const vfcbf_run* run, int* ticks);
VFCBF_API vfcbf_status vfcbf_run_export_csv(const vfcbf_run* run, const char* path);
VFCBF_API void vfcbf_run_free(vfcbf_run* run);

/* Parameter sweep over "dc" or "alpha", `repetitions` runs per value. */
VFCBF_API vfcbf_status vfcbf_sweep_run(const vfcbf_config* cfg, const char* param, const double* values,
                                       size_t count, vfcbf_sweep** out);
VFCBF_API vfcbf_status vfcbf_sweep_summary_count(const vfcbf_sweep* sweep, size_t* count);
VFCBF_API vfcbf_status vfcbf_sweep_summary_at(const vfcbf_sweep* sweep, size_t index, vfcbf_sweep_summary* out);
VFCBF_API vfcbf_status vfcbf_sweep_export_csv(const vfcbf_sweep* sweep, const char* path);
VFCBF_API void vfcbf_sweep_free(vfcbf_sweep* sweep);

/* Density-barrier runs, one per threshold. out_dir may be NULL. */
VFCBF_API vfcbf_status vfcbf_ablation_run(const vfcbf_config* cfg, const double* d_c_values, size_t count,
                                          const char* out_dir, vfcbf_ablation** out);
VFCBF_API vfcbf_status vfcbf_ablation_count(const vfcbf_ablation* ablation, size_t* count);
VFCBF_API vfcbf_status vfcbf_ablation_entry_at(const vfcbf_ablation* ablation, size_t index,
                                               vfcbf_ablation_entry* out);
VFCBF_API void vfcbf_ablation_free(vfcbf_ablation* ablation);

/* Filter-step wall-clock cost on the safe and intervention paths. */
VFCBF_API vfcbf_status vfcbf_bench(const vfcbf_config* cfg, int samples, vfcbf_timing* out);

/* Teleoperation websocket server running the session in real time. Port 0
 * picks a free port. */
VFCBF_API vfcbf_status vfcbf_server_start(const vfcbf_config* cfg, uint16_t port, const char* address,
                                          vfcbf_server** out);
VFCBF_API vfcbf_status vfcbf_server_port(const vfcbf_server* server, uint16_t* port);
/* Blocks until vfcbf_server_stop is called from another thread. */
VFCBF_API vfcbf_status vfcbf_server_wait(vfcbf_server* server);
VFCBF_API vfcbf_status vfcbf_server_stop(vfcbf_server* server);
VFCBF_API void vfcbf_server_free(vfcbf_server* server);

#ifdef __cplusplus
}
#endif

#endif
