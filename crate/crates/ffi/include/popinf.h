#ifndef POPINF_H
#define POPINF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PopinfStatus {
  POPINF_STATUS_OK = 0,
  POPINF_STATUS_NULL_POINTER = 1,
  POPINF_STATUS_INVALID_ARGUMENT = 2,
  POPINF_STATUS_CONFIG = 3,
  POPINF_STATUS_DATA = 4,
  POPINF_STATUS_NUMERICAL = 5,
  POPINF_STATUS_IO = 6,
  POPINF_STATUS_PANIC = 7,
} PopinfStatus;

/**
 * A trained MAML or CNP checkpoint.
 */
typedef struct PopinfCheckpoint PopinfCheckpoint;

/**
 * A fitted single-output Gaussian process.
 */
typedef struct PopinfGp PopinfGp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t popinf_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *popinf_version(void);

/**
 * Number of lines in the default FRF grid.
 */
size_t popinf_frf_grid_len(void);

/**
 * Default FRF grid frequencies (Hz) into `out[popinf_frf_grid_len()]`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum PopinfStatus popinf_frf_grid(double *out, size_t len);

/**
 * Driving-point receptance magnitude of the default chain with base
 * stiffness `k` at `temperature` and `freq`.
 *
 * # Safety
 * `out` must point to one writable double.
 */
enum PopinfStatus popinf_spectral_line(double k, double temperature, double freq, double *out);

/**
 * Driving-point receptance magnitudes on the default grid.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum PopinfStatus popinf_frf(double k, double temperature, double *out, size_t len);

/**
 * Undamped natural frequencies (Hz, ascending) of the default chain.
 *
 * # Safety
 * `out` must point to `len` writable doubles; `len` must equal the DOF count.
 */
enum PopinfStatus popinf_natural_frequencies(double k, double temperature, double *out, size_t len);

/**
 * Normalized mean squared error in percent.
 *
 * # Safety
 * `pred` and `truth` must each point to `n` doubles; `out` to one.
 */
enum PopinfStatus popinf_nmse(const double *pred, const double *truth, size_t n, double *out);

/**
 * Fits a GP with the default optimizer settings and the given seed.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` to a writable handle slot.
 */
enum PopinfStatus popinf_gp_fit(const double *x,
                                const double *y,
                                size_t n,
                                uint64_t seed,
                                struct PopinfGp **out);

/**
 * Posterior mean and variance at `m` queries. `var` may be null.
 *
 * # Safety
 * `gp` must come from `popinf_gp_fit`; buffers must hold `m` doubles.
 */
enum PopinfStatus popinf_gp_predict(const struct PopinfGp *gp,
                                    const double *queries,
                                    size_t m,
                                    double *mean,
                                    double *var);

/**
 * Fitted `(signal variance, length scale, noise variance)`.
 *
 * # Safety
 * `gp` must come from `popinf_gp_fit`; `out` must hold 3 doubles.
 */
enum PopinfStatus popinf_gp_hyperparameters(const struct PopinfGp *gp, double *out);

/**
 * # Safety
 * `gp` must be null or come from `popinf_gp_fit`, and not be used again.
 */
void popinf_gp_free(struct PopinfGp *gp);

/**
 * Loads a checkpoint written by `popinf train`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` a writable handle slot.
 */
enum PopinfStatus popinf_checkpoint_load(const char *path, struct PopinfCheckpoint **out);

/**
 * Target width: values per row in context targets and predictions.
 *
 * # Safety
 * `ck` must be null or come from `popinf_checkpoint_load`.
 */
size_t popinf_checkpoint_target_dim(const struct PopinfCheckpoint *ck);

/**
 * Predicts at `n_query` temperatures from `n_context` context pairs.
 * `context_y` and `out` are row-major with `popinf_checkpoint_target_dim`
 * columns.
 *
 * # Safety
 * `ck` must come from `popinf_checkpoint_load`; buffers must match the sizes.
 */
enum PopinfStatus popinf_checkpoint_predict(const struct PopinfCheckpoint *ck,
                                            const double *context_x,
                                            const double *context_y,
                                            size_t n_context,
                                            const double *queries,
                                            size_t n_query,
                                            double *out);

/**
 * # Safety
 * `ck` must be null or come from `popinf_checkpoint_load`, and not be used again.
 */
void popinf_checkpoint_free(struct PopinfCheckpoint *ck);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POPINF_H */
