#ifndef RANKIRL_H
#define RANKIRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every FFI call.
 */
typedef enum RankirlStatus {
  /**
   * Success.
   */
  RankirlStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  RankirlStatus_NullPointer = 1,
  /**
   * Invalid argument (bad dimension, rank, C, or tolerance).
   */
  RankirlStatus_InvalidArgument = 2,
  /**
   * The solver failed to converge.
   */
  RankirlStatus_NonConvergence = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  RankirlStatus_InvalidUtf8 = 4,
  /**
   * An output buffer was too small.
   */
  RankirlStatus_BufferTooSmall = 5,
} RankirlStatus;

/**
 * Dataset under construction: ranked feature expectations plus the
 * slack weight `C`. Opaque to C.
 */
typedef struct RankirlDataset RankirlDataset;

/**
 * Solved instance. Opaque to C.
 */
typedef struct RankirlSolution RankirlSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message for the calling thread into `buf`
 * (NUL-terminated, truncated to `len` bytes). Returns the full message
 * length excluding the NUL, or 0 when no error has occurred.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
uintptr_t rankirl_last_error(char *buf, uintptr_t len);

/**
 * Create a dataset for `dim`-dimensional feature expectations with
 * slack weight `c`. Returns null on invalid arguments.
 */
struct RankirlDataset *rankirl_dataset_new(uintptr_t dim, double c);

/**
 * Add one demonstrator: `values` is a `dim`-long vector, `rank >= 1`
 * with higher = better, `source_id` a unique NUL-terminated label.
 *
 * # Safety
 * `dataset` must come from [`rankirl_dataset_new`] and not be freed;
 * `values` must point to `dim` readable doubles; `source_id` must be a
 * valid NUL-terminated string.
 */
enum RankirlStatus rankirl_dataset_add(struct RankirlDataset *dataset,
                                       const char *source_id,
                                       uintptr_t rank,
                                       const double *values);

/**
 * Solve the sum-of-margins problem. On success `*out` owns a new
 * solution handle. The dataset stays valid and reusable.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be a writable pointer.
 */
enum RankirlStatus rankirl_solve(const struct RankirlDataset *dataset,
                                 double tol,
                                 struct RankirlSolution **out);

/**
 * Weight-vector dimension of a solution (0 for null).
 */
uintptr_t rankirl_solution_dim(const struct RankirlSolution *solution);

/**
 * Number of rank margins (k - 1; 0 for null).
 */
uintptr_t rankirl_solution_n_margins(const struct RankirlSolution *solution);

/**
 * Objective value (NaN for null).
 */
double rankirl_solution_objective(const struct RankirlSolution *solution);

/**
 * Max feasibility violation of the returned point (NaN for null).
 */
double rankirl_solution_feasibility_residual(const struct RankirlSolution *solution);

/**
 * 1 when the instance was degenerate (no separating direction), else 0.
 */
int32_t rankirl_solution_degenerate(const struct RankirlSolution *solution);

/**
 * Copy the recovered weight vector into `buf` (`len >= dim`).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum RankirlStatus rankirl_solution_w(const struct RankirlSolution *solution,
                                      double *buf,
                                      uintptr_t len);

/**
 * Copy the per-boundary margins into `buf` (`len >= n_margins`).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum RankirlStatus rankirl_solution_margins(const struct RankirlSolution *solution,
                                            double *buf,
                                            uintptr_t len);

/**
 * Free a dataset handle (null is a no-op).
 *
 * # Safety
 * `dataset` must come from [`rankirl_dataset_new`] and not be freed twice.
 */
void rankirl_dataset_free(struct RankirlDataset *dataset);

/**
 * Free a solution handle (null is a no-op).
 *
 * # Safety
 * `solution` must come from [`rankirl_solve`] and not be freed twice.
 */
void rankirl_solution_free(struct RankirlSolution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANKIRL_H */
