#ifndef PCE_OL_H
#define PCE_OL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PceOlStatus {
  PCE_OL_STATUS_OK = 0,
  PCE_OL_STATUS_NULL_POINTER = 1,
  /**
   * Bad shape, out-of-domain point or invalid parameter.
   */
  PCE_OL_STATUS_INVALID_ARGUMENT = 2,
  PCE_OL_STATUS_IO = 3,
  /**
   * Corrupt, truncated, mismatched or incompatible model file.
   */
  PCE_OL_STATUS_MODEL = 4,
  PCE_OL_STATUS_CONFIG = 5,
  /**
   * Rank deficiency, non-convergence or a failed reference solve.
   */
  PCE_OL_STATUS_FIT = 6,
  PCE_OL_STATUS_PANIC = 7,
} PceOlStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct PceOlModel PceOlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *pce_ol_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pce_ol_version(void);

/**
 * Loads a model file; `*out` receives a handle to release with
 * [`pce_ol_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PceOlStatus pce_ol_model_load(const char *path, struct PceOlModel **out);

/**
 * Writes the model to `path` (atomically).
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum PceOlStatus pce_ol_model_save(const struct PceOlModel *model, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void pce_ol_model_free(struct PceOlModel *model);

/**
 * Basis sizes `Q`, `P` and input dimensions (spatio-temporal `d`,
 * stochastic `r`). Any output pointer may be null.
 *
 * # Safety
 * Non-null pointers must be writable.
 */
enum PceOlStatus pce_ol_model_dims(const struct PceOlModel *model,
                                   size_t *q,
                                   size_t *p,
                                   size_t *d,
                                   size_t *r);

/**
 * Surrogate values at `n_points` points (`n_points × d`) for `n_samples`
 * draws of `ξ` (`n_samples × r`); `out` is `n_points × n_samples`.
 *
 * # Safety
 * Arrays must hold the stated number of elements.
 */
enum PceOlStatus pce_ol_model_predict(const struct PceOlModel *model,
                                      const double *points,
                                      size_t n_points,
                                      const double *xi,
                                      size_t n_samples,
                                      double *out);

/**
 * Predictive mean at each point.
 *
 * # Safety
 * `points` holds `n_points × d` values, `out` has room for `n_points`.
 */
enum PceOlStatus pce_ol_model_mean(const struct PceOlModel *model,
                                   const double *points,
                                   size_t n_points,
                                   double *out);

/**
 * Predictive standard deviation at each point.
 *
 * # Safety
 * `points` holds `n_points × d` values, `out` has room for `n_points`.
 */
enum PceOlStatus pce_ol_model_std(const struct PceOlModel *model,
                                  const double *points,
                                  size_t n_points,
                                  double *out);

/**
 * Runs the fit pipeline for a TOML run configuration. When `out_dir` is
 * non-null the model, report and CSVs are written there. `model_out` (may
 * be null) receives the fitted model, `mse_out` (may be null) the test MSE.
 *
 * # Safety
 * String arguments must be NUL-terminated; output pointers writable.
 */
enum PceOlStatus pce_ol_fit(const char *config_path,
                            const char *out_dir,
                            struct PceOlModel **model_out,
                            double *mse_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCE_OL_H */
