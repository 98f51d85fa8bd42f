#ifndef TISP_H
#define TISP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TispStatus {
  TISP_STATUS_OK = 0,
  /**
   * Bad parameter or rule string.
   */
  TISP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Inconsistent or non-finite data.
   */
  TISP_STATUS_DATA_ERROR = 2,
  TISP_STATUS_NUMERICAL_ERROR = 3,
  TISP_STATUS_NULL_POINTER = 4,
  /**
   * Caller buffer too small.
   */
  TISP_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  TISP_STATUS_PANIC = 6,
} TispStatus;

typedef enum TispScale {
  TISP_SCALE_UNSCALED = 0,
  /**
   * Scale by the spectral norm of X.
   */
  TISP_SCALE_AUTO = 1,
  /**
   * Use the `k` argument.
   */
  TISP_SCALE_FIXED = 2,
} TispScale;

/**
 * Opaque problem handle.
 */
typedef struct TispProblem TispProblem;

/**
 * Opaque fit handle.
 */
typedef struct TispResult TispResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread (empty after a success).
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *tisp_last_error_message(void);

/**
 * `Θ(t; λ)` for a rule string such as `"soft"`, `"scad:3.7"` or `"hybrid:0.5"`.
 *
 * # Safety
 * `rule` must be a NUL-terminated string and `out` a writable `double`.
 */
enum TispStatus tisp_threshold_apply(const char *rule, double t, double lambda, double *out);

/**
 * Penalty `P(θ; λ)` induced by the rule.
 *
 * # Safety
 * As for [`tisp_threshold_apply`].
 */
enum TispStatus tisp_penalty(const char *rule, double theta, double lambda, double *out);

/**
 * Builds a problem from a row-major `n × p` design and a length-`n` response.
 * The data are copied.
 *
 * # Safety
 * `x` must point to `n*p` doubles, `y` to `n` doubles, `rule` to a
 * NUL-terminated string and `out` to a writable handle pointer.
 */
enum TispStatus tisp_problem_new(const double *x,
                                 size_t n,
                                 size_t p,
                                 const double *y,
                                 const char *rule,
                                 double lambda,
                                 enum TispScale scale,
                                 double k,
                                 struct TispProblem **out);

/**
 * # Safety
 * `problem` must come from [`tisp_problem_new`] and not be freed twice. Null is ignored.
 */
void tisp_problem_free(struct TispProblem *problem);

/**
 * Runs the solver from `init` (length `p`, or null for the zero vector).
 *
 * # Safety
 * `problem` must be a live handle; `init`, if non-null, must point to `p`
 * doubles; `out` must be a writable handle pointer.
 */
enum TispStatus tisp_solve(const struct TispProblem *problem,
                           const double *init,
                           double tol,
                           size_t max_iter,
                           struct TispResult **out);

/**
 * # Safety
 * `result` must come from [`tisp_solve`] and not be freed twice. Null is ignored.
 */
void tisp_result_free(struct TispResult *result);

/**
 * Number of coefficients; 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t tisp_result_len(const struct TispResult *result);

/**
 * Copies the coefficients into `buf`, which must hold `len ≥ tisp_result_len` doubles.
 *
 * # Safety
 * `result` must be a live handle and `buf` writable for `len` doubles.
 */
enum TispStatus tisp_result_beta(const struct TispResult *result, double *buf, size_t len);

/**
 * Summary scalars of a fit; any output pointer may be null.
 *
 * # Safety
 * `result` must be a live handle; non-null outputs must be writable.
 */
enum TispStatus tisp_result_summary(const struct TispResult *result,
                                    size_t *iterations,
                                    bool *converged,
                                    double *objective,
                                    double *theta_residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TISP_H */
