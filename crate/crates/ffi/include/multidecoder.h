#ifndef MULTIDECODER_H
#define MULTIDECODER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MdStatus {
  MD_STATUS_OK = 0,
  MD_STATUS_NULL_ARGUMENT = 1,
  MD_STATUS_CONFIG = 2,
  MD_STATUS_DATA = 3,
  MD_STATUS_NUMERICAL = 4,
  MD_STATUS_INVALID_UTF8 = 5,
  MD_STATUS_PANIC = 6,
} MdStatus;

/**
 * Opaque run configuration.
 */
typedef struct MdConfig MdConfig;

/**
 * Opaque linear SRT model.
 */
typedef struct MdModel MdModel;

/**
 * Opaque evaluation report.
 */
typedef struct MdReport MdReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *md_last_error_message(void);

/**
 * Library version string (static storage).
 */
const char *md_version(void);

/**
 * The default configuration.
 */
struct MdConfig *md_config_new_default(void);

/**
 * Parses a JSON configuration; fields left out take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MdStatus md_config_from_json(const char *json, struct MdConfig **out);

/**
 * # Safety
 * `config` must come from this library and `dir` be NUL-terminated.
 */
enum MdStatus md_config_set_out_dir(struct MdConfig *config, const char *dir);

/**
 * # Safety
 * `config` must come from this library.
 */
enum MdStatus md_config_set_seed(struct MdConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must come from this library or be null.
 */
void md_config_free(struct MdConfig *config);

/**
 * Generates the cohort into the configured output directory.
 *
 * # Safety
 * `config` must come from this library.
 */
enum MdStatus md_run_synth(const struct MdConfig *config);

/**
 * Fills the NT cache; writes the number of rows to `rows` when non-null.
 *
 * # Safety
 * `config` must come from this library; `rows` may be null.
 */
enum MdStatus md_run_decode(const struct MdConfig *config, size_t *rows);

/**
 * Nested prediction and evaluation from an existing cache.
 *
 * # Safety
 * `config` must come from this library and `out` be a valid pointer.
 */
enum MdStatus md_run_predict(const struct MdConfig *config, struct MdReport **out);

/**
 * synth, decode, predict and null; returns the prediction report.
 *
 * # Safety
 * `config` must come from this library and `out` be a valid pointer.
 */
enum MdStatus md_run_all(const struct MdConfig *config, struct MdReport **out);

/**
 * Evaluates predictions against behavioral SRTs (`n ≥ 3`).
 *
 * # Safety
 * `behavioral` and `predicted` must point to `n` doubles.
 */
enum MdStatus md_evaluate(const double *behavioral,
                          const double *predicted,
                          size_t n,
                          struct MdReport **out);

/**
 * Reads the report's metrics; any output pointer may be null.
 *
 * # Safety
 * `report` must come from this library.
 */
enum MdStatus md_report_metrics(const struct MdReport *report,
                                double *pearson_r,
                                double *p_value,
                                double *nrmse,
                                double *median_abs_diff_db,
                                size_t *n_subjects);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
void md_report_free(struct MdReport *report);

/**
 * Root-mean-square error over the range of `y`.
 *
 * # Safety
 * `y` and `y_hat` must point to `n` doubles.
 */
enum MdStatus md_nrmse(const double *y, const double *y_hat, size_t n, double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum MdStatus md_fisher_z(double r, double *out);

/**
 * Elementwise ERF transform of `n` values into `out`.
 *
 * # Safety
 * `values` and `out` must each point to `n` doubles.
 */
enum MdStatus md_erf_transform(const double *values, size_t n, double sigma, double *out);

/**
 * Trains a linear SVR on `n_rows × dim` row-major features.
 *
 * # Safety
 * `x` must point to `n_rows * dim` doubles, `y` to `n_rows`, and `out`
 * be a valid pointer.
 */
enum MdStatus md_model_train(const double *x,
                             size_t n_rows,
                             size_t dim,
                             const double *y,
                             double c_reg,
                             double epsilon,
                             struct MdModel **out);

/**
 * # Safety
 * `model` must come from this library and `v` point to `dim` doubles.
 */
enum MdStatus md_model_predict(const struct MdModel *model,
                               const double *v,
                               size_t dim,
                               double *out);

/**
 * # Safety
 * `model` must come from this library.
 */
size_t md_model_dim(const struct MdModel *model);

/**
 * Writes the model in the MDSVR1 format.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum MdStatus md_model_save(const struct MdModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` a valid pointer.
 */
enum MdStatus md_model_load(const char *path, struct MdModel **out);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void md_model_free(struct MdModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIDECODER_H */
