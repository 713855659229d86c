/* C interface to the sbfit additive-regression library. */

#ifndef SBFIT_H
#define SBFIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Kernel boundary handling, mirroring the library's two modes.
typedef enum SbfitKernelMode {
  // Linear boundary correction near the interval ends.
  SBFIT_KERNEL_MODE_CORRECTED = 0,
  // Plain rescaled kernel everywhere.
  SBFIT_KERNEL_MODE_CONVENTIONAL = 1,
} SbfitKernelMode;

// Which centering convention the returned components satisfy.
typedef enum SbfitNorming {
  // Zero mean against the adjusted density estimate.
  SBFIT_NORMING_ADJUSTED_DENSITY = 0,
  // Zero mean against the raw density estimate.
  SBFIT_NORMING_RAW_DENSITY = 1,
  // Zero mean over the observed sample.
  SBFIT_NORMING_SAMPLE_MEAN = 2,
} SbfitNorming;

// Result of a fallible call.
typedef enum SbfitStatus {
  // The call succeeded.
  SBFIT_STATUS_OK = 0,
  // Invalid options or dimensions.
  SBFIT_STATUS_CONFIG = 1,
  // Invalid sample values.
  SBFIT_STATUS_DATA = 2,
  // The computation broke down numerically.
  SBFIT_STATUS_NUMERICAL = 3,
  // File-system failure (unused by this interface, reserved).
  SBFIT_STATUS_IO = 4,
  // A required pointer argument was null.
  SBFIT_STATUS_NULL_ARGUMENT = 5,
  // An internal invariant failed; the library state is still sound.
  SBFIT_STATUS_PANIC = 6,
} SbfitStatus;

// An opaque fitted model.
typedef struct SbfitFit SbfitFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the message of the most recent failure on this thread into `buf`
// (NUL-terminated, truncated to `cap` bytes) and return the full message
// length including the terminator. Returns 0 when no failure is recorded.
// Pass a null `buf` or zero `cap` to query the length alone.
size_t sbfit_last_error(char *buf, size_t cap);

// Fit an additive model and hand back an owned handle through `out`.
//
// `covariates` holds `n * d` values in column-major order (all of
// covariate 1, then all of covariate 2, ...). `intervals` holds `2 * d`
// values as per-covariate `lo, hi` pairs declaring each axis's domain;
// `bandwidths` holds `d` kernel scales. Every component curve is
// evaluated on `grid_size` equally spaced points across its interval.
//
// On success `*out` owns the fit and must be released with
// [`sbfit_fit_free`]; on failure `*out` is untouched.
enum SbfitStatus sbfit_fit_create(const double *covariates,
                                  const double *responses,
                                  size_t n,
                                  size_t d,
                                  const double *intervals,
                                  const double *bandwidths,
                                  size_t grid_size,
                                  enum SbfitKernelMode kernel_mode,
                                  enum SbfitNorming norming,
                                  double tol,
                                  size_t max_sweeps,
                                  struct SbfitFit **out);

// Release a fit handle. A null pointer is ignored.
void sbfit_fit_free(struct SbfitFit *fit);

// Number of covariates of a fit, or 0 for a null handle.
size_t sbfit_fit_dim(const struct SbfitFit *fit);

// The fitted constant term, or NaN for a null handle.
double sbfit_fit_intercept(const struct SbfitFit *fit);

// Number of Gauss–Seidel sweeps the fit took, or 0 for a null handle.
size_t sbfit_fit_sweeps(const struct SbfitFit *fit);

// The final sup-norm residual of the sweep, or NaN for a null handle.
double sbfit_fit_final_residual(const struct SbfitFit *fit);

// Grid length of component `j` (0-based), or 0 when out of range.
size_t sbfit_fit_grid_len(const struct SbfitFit *fit, size_t j);

// Copy component `j`'s curve into caller buffers of length `len`: grid
// nodes into `xs` and fitted values into `values`. Either buffer may be
// null to skip it. `len` must equal [`sbfit_fit_grid_len`] for `j`.
enum SbfitStatus sbfit_fit_component(const struct SbfitFit *fit,
                                     size_t j,
                                     double *xs,
                                     double *values,
                                     size_t len);

// Evaluate the fitted regression surface at one point (`d` coordinates,
// matching the fit's dimension) and write the value to `out`. Coordinates
// must lie inside their axis intervals.
enum SbfitStatus sbfit_fit_predict(const struct SbfitFit *fit,
                                   const double *point,
                                   size_t d,
                                   double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SBFIT_H */
