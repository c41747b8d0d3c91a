#ifndef SCHAUDER_H
#define SCHAUDER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SchauderStatus {
  SCHAUDER_STATUS_OK = 0,
  SCHAUDER_STATUS_NULL_POINTER = 1,
  SCHAUDER_STATUS_INVALID_ARGUMENT = 2,
  SCHAUDER_STATUS_INVALID_UTF8 = 3,
  SCHAUDER_STATUS_DIVERGENT = 4,
  SCHAUDER_STATUS_NON_CONVERGENT = 5,
  SCHAUDER_STATUS_NUMERICAL = 6,
  SCHAUDER_STATUS_IO = 7,
  SCHAUDER_STATUS_BUFFER_TOO_SMALL = 8,
  SCHAUDER_STATUS_PANIC = 9,
} SchauderStatus;

/**
 * A sweep configuration (opaque).
 */
typedef struct SchauderConfig SchauderConfig;

/**
 * A test function (opaque).
 */
typedef struct SchauderFunction SchauderFunction;

/**
 * A discrete parabolic mollifier (opaque).
 */
typedef struct SchauderMollifier SchauderMollifier;

/**
 * A verification report (opaque).
 */
typedef struct SchauderReport SchauderReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *schauder_version(void);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` must be null or
 * valid for one write.
 */
enum SchauderStatus schauder_last_error(char *buf, size_t len, size_t *needed);

/**
 * Builds a built-in test function by name (`spatial_cusp`, `caloric_poly`, ...).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for one write.
 */
enum SchauderStatus schauder_function_builtin(const char *name,
                                              size_t dim,
                                              double alpha,
                                              struct SchauderFunction **out);

/**
 * # Safety
 * `f` must be null or a handle from `schauder_function_builtin` not yet freed.
 */
void schauder_function_free(struct SchauderFunction *f);

/**
 * Spatial dimension of `f`, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t schauder_function_dim(const struct SchauderFunction *f);

/**
 * Evaluates `f` at `(x, t)`.
 *
 * # Safety
 * `x` must hold `dim` values; `value` must be valid for one write.
 */
enum SchauderStatus schauder_function_eval(const struct SchauderFunction *f,
                                           const double *x,
                                           size_t dim,
                                           double t,
                                           double *value);

/**
 * Parabolic distance `max(|x − y|, |t − s|^{1/2})`; NaN if a pointer is null.
 *
 * # Safety
 * `x` and `y` must each hold `dim` values.
 */
double schauder_pdist(const double *x, double t, const double *y, double s, size_t dim);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum SchauderStatus schauder_mollifier_new(size_t dim,
                                           size_t kernel_nodes,
                                           struct SchauderMollifier **out);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
void schauder_mollifier_free(struct SchauderMollifier *m);

/**
 * `∂_x^{axes} ∂_t^{j} u_τ(x, t)`; `axes` lists the differentiated axes
 * with repetition (e.g. `{0, 0}` for the second derivative along axis 0).
 *
 * # Safety
 * `axes` must hold `n_axes` values, `x` must hold `dim` values and
 * `value` must be valid for one write.
 */
enum SchauderStatus schauder_mollify_at(const struct SchauderMollifier *m,
                                        const struct SchauderFunction *f,
                                        double tau,
                                        const size_t *axes,
                                        size_t n_axes,
                                        uint8_t j,
                                        const double *x,
                                        size_t dim,
                                        double t,
                                        double *value);

/**
 * Sampled Hölder seminorm `[f]_α` on the unit cylinder `Q_1`.
 *
 * # Safety
 * `value` must be valid for one write.
 */
enum SchauderStatus schauder_holder_seminorm(const struct SchauderFunction *f,
                                             double alpha,
                                             size_t nx,
                                             size_t nt,
                                             uint64_t pair_budget,
                                             double *value);

/**
 * `∬_E |x−y|²/(t−s)²` over the heat ball of radius `r` (equals `4r^d`).
 *
 * # Safety
 * `value` must be valid for one write.
 */
enum SchauderStatus schauder_kernel_mass(size_t dim, double r, double *value);

/**
 * Heat-ball mean value of `f` around `(x, t)`.
 *
 * # Safety
 * `x` must hold `dim` values; `value` must be valid for one write.
 */
enum SchauderStatus schauder_mean_value(const struct SchauderFunction *f,
                                        const double *x,
                                        size_t dim,
                                        double t,
                                        double r,
                                        double *value);

/**
 * `(1/r^d) ∫ R_r(σ)^α σ^{−β} dσ`; [`SchauderStatus::Divergent`] when
 * `α/2 − β + 1 ≤ 0`.
 *
 * # Safety
 * `value` must be valid for one write.
 */
enum SchauderStatus schauder_scaling_integral(uint32_t alpha,
                                              uint32_t beta,
                                              double r,
                                              size_t dim,
                                              double *value);

/**
 * The acceptance configuration with the given dimension, exponent and seed.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SchauderStatus schauder_config_new(size_t dim,
                                        double alpha,
                                        uint64_t seed,
                                        struct SchauderConfig **out);

/**
 * A configuration parsed from JSON (the layout written into manifests).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for one write.
 */
enum SchauderStatus schauder_config_from_json(const char *json, struct SchauderConfig **out);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
void schauder_config_free(struct SchauderConfig *c);

/**
 * Runs one named check. A check that fails still yields a report and
 * [`SchauderStatus::Ok`]; inspect it with [`schauder_report_passed`].
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for one write.
 */
enum SchauderStatus schauder_check_run(const struct SchauderConfig *config,
                                       const char *name,
                                       struct SchauderReport **out);

/**
 * # Safety
 * `r` must be a live handle; `passed` must be valid for one write.
 */
enum SchauderStatus schauder_report_passed(const struct SchauderReport *r, bool *passed);

/**
 * Copies the report as JSON into `buf`. Call with a null `buf` to learn
 * the size through `needed`.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` must be null or
 * valid for one write.
 */
enum SchauderStatus schauder_report_json(const struct SchauderReport *r,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * # Safety
 * `r` must be null or a live handle.
 */
void schauder_report_free(struct SchauderReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCHAUDER_H */
