/* C interface to the robust-sketch library. */

#ifndef ROBUST_SKETCH_H
#define ROBUST_SKETCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Kernel selector for the C surface.
typedef enum RsKernel {
  RS_KERNEL_EXP = 0,
  RS_KERNEL_RATIONAL = 1,
} RsKernel;

// Status codes returned by every fallible call.
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_ARGUMENT = 2,
  RS_STATUS_DIMENSION_MISMATCH = 3,
  RS_STATUS_BUDGET_EXHAUSTED = 4,
  RS_STATUS_CAPACITY_EXCEEDED = 5,
  RS_STATUS_DEGENERATE_INPUT = 6,
  RS_STATUS_IO_ERROR = 7,
  RS_STATUS_INTERNAL_ERROR = 8,
} RsStatus;

// Opaque all-points distance estimator.
typedef struct RsDistanceEstimator RsDistanceEstimator;

// Opaque replica-wrapped density estimator.
typedef struct RsKdeEstimator RsKdeEstimator;

// Opaque robust dynamic-regression runner.
typedef struct RsRegression RsRegression;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *rs_last_error(void);

// Library version as a static string.
const char *rs_version(void);

// Builds a distance estimator over `n` points of dimension `d` stored
// row-major in `points`, provisioned for `query_budget` adaptive queries at
// accuracy `eps`.
//
// # Safety
// `points` must reference `n * d` readable doubles and `out` a writable
// pointer slot.
enum RsStatus rs_distance_build(const double *points,
                                size_t n,
                                size_t d,
                                size_t query_budget,
                                double eps,
                                uint64_t seed,
                                struct RsDistanceEstimator **out);

// Answers one adaptive query: writes the `n` estimated distances from
// `query` to every stored point into `out_distances`.
//
// # Safety
// `query` must reference `d` readable doubles and `out_distances` `n`
// writable doubles, with `d`/`n` matching the build call.
enum RsStatus rs_distance_query(struct RsDistanceEstimator *est,
                                const double *query,
                                size_t d,
                                double *out_distances,
                                size_t n);

// Retained coordinate count (`n * r * k` reals).
//
// # Safety
// `est` must be a live handle from [`rs_distance_build`].
size_t rs_distance_stored_reals(const struct RsDistanceEstimator *est);

// Remaining query budget.
//
// # Safety
// `est` must be a live handle from [`rs_distance_build`].
size_t rs_distance_remaining_budget(const struct RsDistanceEstimator *est);

// Releases a distance estimator; a null handle is a no-op.
//
// # Safety
// `est` must be null or a handle from [`rs_distance_build`] not yet freed.
void rs_distance_free(struct RsDistanceEstimator *est);

// Builds a density estimator provisioned for `query_budget` adaptive
// queries at accuracy `eps` under promise threshold `tau`.
//
// # Safety
// `points` must reference `n * d` readable doubles and `out` a writable
// pointer slot.
enum RsStatus rs_kde_build(const double *points,
                           size_t n,
                           size_t d,
                           size_t query_budget,
                           double eps,
                           double tau,
                           enum RsKernel kernel,
                           double kernel_scale,
                           uint64_t seed,
                           struct RsKdeEstimator **out);

// Answers one adaptive density query. `out_promise_met` (optional) receives
// 1 when the estimate clears the promise threshold.
//
// # Safety
// `query` must reference `d` readable doubles matching the build dimension;
// `out_value` must be writable; `out_promise_met` may be null.
enum RsStatus rs_kde_query(struct RsKdeEstimator *est,
                           const double *query,
                           size_t d,
                           double *out_value,
                           int32_t *out_promise_met);

// Releases a density estimator; a null handle is a no-op.
//
// # Safety
// `est` must be null or a handle from [`rs_kde_build`] not yet freed.
void rs_kde_free(struct RsKdeEstimator *est);

// Builds the robust runner over a `rows x cols` row-major design matrix and
// the initial label vector, for updates touching at most `sparsity` entries
// per round.
//
// # Safety
// `design` must reference `rows * cols` readable doubles, `labels` `rows`
// readable doubles, and `out` a writable pointer slot.
enum RsStatus rs_regression_build(const double *design,
                                  size_t rows,
                                  size_t cols,
                                  const double *labels,
                                  double eps,
                                  size_t sparsity,
                                  uint64_t seed,
                                  struct RsRegression **out);

// Applies one sparse update (`indices[i] <- values[i]`, absolute values)
// and writes the released cost estimate.
//
// # Safety
// `indices` and `values` must reference `len` readable elements each;
// `out_estimate` must be writable.
enum RsStatus rs_regression_step(struct RsRegression *reg,
                                 const size_t *indices,
                                 const double *values,
                                 size_t len,
                                 double *out_estimate);

// Releases a regression runner; a null handle is a no-op.
//
// # Safety
// `reg` must be null or a handle from [`rs_regression_build`] not yet freed.
void rs_regression_free(struct RsRegression *reg);

// Exact least-squares cost of `(design, labels)`; the reference oracle.
//
// # Safety
// `design` must reference `rows * cols` readable doubles, `labels` `rows`
// readable doubles, and `out_cost` a writable double.
enum RsStatus rs_regression_exact_cost(const double *design,
                                       size_t rows,
                                       size_t cols,
                                       const double *labels,
                                       double *out_cost);

// Private median of `values` over the geometric grid `[grid_lo, grid_hi]`
// with multiplicative step `grid_ratio`.
//
// # Safety
// `values` must reference `len` readable doubles and `out` a writable
// double.
enum RsStatus rs_private_median(const double *values,
                                size_t len,
                                double grid_lo,
                                double grid_hi,
                                double grid_ratio,
                                double epsilon,
                                uint64_t seed,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_SKETCH_H */
