/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the randomout training engine.
 *
 * Every function returns an ro_status. On failure the calling thread's
 * last error message is available from ro_last_error() until the next call
 * on that thread. Objects are opaque handles released with their *_free
 * function. Strings returned through `char**` are heap-allocated and must be
 * released with ro_string_free.
 *
 * Configs are JSON documents (see README for the schema); unknown fields
 * are rejected.
 */
#ifndef RANDOMOUT_H
#define RANDOMOUT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RO_BUILDING_LIBRARY)
#    define RO_API __declspec(dllexport)
#  else
#    define RO_API __declspec(dllimport)
#  endif
#else
#  define RO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ro_status {
  RO_OK = 0,
  RO_ERR_INVALID_ARGUMENT = 1,
  RO_ERR_SHAPE = 2,
  RO_ERR_FORMAT = 3,
  RO_ERR_IO = 4,
  RO_ERR_CONFIG = 5,
  RO_ERR_RUNTIME = 6
} ro_status;

typedef struct ro_dataset ro_dataset;
typedef struct ro_model ro_model;
typedef struct ro_run ro_run;

typedef void (*ro_log_fn)(const char* line, void* user);

RO_API const char* ro_version(void);
RO_API const char* ro_last_error(void);
/* Byte offset or line number attached to the last RO_ERR_FORMAT, else 0. */
RO_API size_t ro_last_error_position(void);
RO_API const char* ro_status_name(ro_status status);
RO_API void ro_string_free(char* s);

/* Per-epoch and per-run progress lines. Pass NULL to disable. */
RO_API void ro_set_log_callback(ro_log_fn fn, void* user);

/* ---- configuration ---------------------------------------------------- */

/* Validates a config and returns its canonical JSON and 16-hex-digit hash. */
RO_API ro_status ro_config_canonicalize(const char* config_json, char** canonical_out,
                                        char** hash_out);

/* ---- datasets ---------------------------------------------------------- */

RO_API ro_status ro_dataset_synth(size_t n_pos, size_t n_neg, uint64_t seed, ro_dataset** out);
RO_API ro_status ro_dataset_load_idx(const char* images_path, const char* labels_path,
                                     ro_dataset** out);
RO_API ro_status ro_dataset_load_cifar10(const char* path, size_t max_per_class,
                                         ro_dataset** out);
RO_API ro_status ro_dataset_write_idx(const ro_dataset* ds, const char* images_path,
                                      const char* labels_path);
/* dims_out receives [N, C, H, W]. */
RO_API ro_status ro_dataset_shape(const ro_dataset* ds, size_t dims_out[4]);
RO_API ro_status ro_dataset_labels(const ro_dataset* ds, int* labels_out, size_t capacity);
RO_API ro_status ro_dataset_pixels(const ro_dataset* ds, double* pixels_out, size_t capacity);
RO_API void ro_dataset_free(ro_dataset* ds);

/* ---- models ------------------------------------------------------------ */

/* name: "cratercnn" or "mini_inception". Weights come from the run seed's
 * init stream, exactly as a training run with that seed would start. */
RO_API ro_status ro_model_create(const char* name, size_t width, int with_batchnorm,
                                 size_t channels, size_t height, size_t width_px,
                                 size_t num_classes, uint64_t seed, ro_model** out);
RO_API ro_status ro_model_filter_count(const ro_model* m, size_t* out);
RO_API ro_status ro_model_param_count(const ro_model* m, size_t* out);
/* Eval-mode forward pass: input is [batch, C, H, W] row-major, logits_out
 * must hold batch * num_classes doubles. */
RO_API ro_status ro_model_forward(ro_model* m, const double* input, size_t batch,
                                  double* logits_out);
RO_API void ro_model_free(ro_model* m);

/* ---- training and sweeps ----------------------------------------------- */

/* Runs one training job. With out_dir non-NULL the artifact is written to
 * <out_dir>/<hash>/. */
RO_API ro_status ro_run_train(const char* config_json, const char* out_dir, ro_run** out);
RO_API ro_status ro_run_hash(const ro_run* r, char** hash_out);
RO_API ro_status ro_run_final_test_acc(const ro_run* r, double* out);
RO_API ro_status ro_run_diverged(const ro_run* r, int* out);
RO_API ro_status ro_run_reset_count(const ro_run* r, size_t* out);
RO_API ro_status ro_run_record_count(const ro_run* r, size_t* out);
/* The metrics CSV exactly as written to metrics.csv. */
RO_API ro_status ro_run_metrics_csv(const ro_run* r, char** csv_out);
RO_API void ro_run_free(ro_run* r);

/* conditions: comma-separated subset of "base,randomout,batchnorm".
 * randomout_json: {"tau":..,"p_active":..,"check_every":..} or NULL for
 * defaults. summary_json_out receives the sweep summary. */
RO_API ro_status ro_sweep_seeds(const char* config_json, const uint64_t* seeds, size_t n_seeds,
                                const char* conditions, const char* randomout_json, size_t jobs,
                                const char* out_dir, char** summary_json_out);
/* heatmap_csv_out (optional) receives the tau x p gain table. */
RO_API ro_status ro_grid_search(const char* config_json, const double* taus, size_t n_taus,
                                const double* ps, size_t n_ps, const uint64_t* seeds,
                                size_t n_seeds, size_t jobs, const char* out_dir,
                                char** summary_json_out, char** heatmap_csv_out);
RO_API ro_status ro_width_sweep(const char* config_json, const size_t* widths, size_t n_widths,
                                const uint64_t* seeds, size_t n_seeds,
                                const char* randomout_json, size_t jobs, const char* out_dir,
                                char** summary_json_out, char** table_csv_out);

/* Runs every finite-difference suite. report_json_out lists
 * {"suite", "max_relative_error", "checked", "skipped_kinks", "passed"}; all_passed_out is 1
 * iff every suite is below the tolerance. */
RO_API ro_status ro_gradcheck(char** report_json_out, int* all_passed_out);

#ifdef __cplusplus
}
#endif

#endif /* RANDOMOUT_H */
