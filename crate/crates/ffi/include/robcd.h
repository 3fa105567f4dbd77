#ifndef ROBCD_H
#define ROBCD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum RobcdStatus {
  ROBCD_STATUS_OK = 0,
  ROBCD_STATUS_NULL_POINTER = 1,
  ROBCD_STATUS_INVALID_INPUT = 2,
  ROBCD_STATUS_PARSE = 3,
  ROBCD_STATUS_DOMAIN = 4,
  ROBCD_STATUS_NUMERIC = 5,
  ROBCD_STATUS_OPTIMIZATION = 6,
  ROBCD_STATUS_SINGULAR = 7,
  ROBCD_STATUS_IO = 8,
  ROBCD_STATUS_STUDY = 9,
  ROBCD_STATUS_PANIC = 10,
} RobcdStatus;

typedef enum RobcdPivot {
  ROBCD_PIVOT_WALD = 0,
  ROBCD_PIVOT_ROOT = 1,
} RobcdPivot;

typedef enum RobcdAlternative {
  ROBCD_ALTERNATIVE_LESS = 0,
  ROBCD_ALTERNATIVE_GREATER = 1,
  ROBCD_ALTERNATIVE_TWO_SIDED = 2,
} RobcdAlternative;

// A confidence distribution on a grid.
typedef struct RobcdCd RobcdCd;

// Observations with their sample or design layout.
typedef struct RobcdDataset RobcdDataset;

// A fitted model together with the data it was fitted to.
typedef struct RobcdFit RobcdFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after a
// successful call. Valid until the next library call on this thread.
const char *robcd_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void robcd_string_free(char *s);

// Two independent samples.
//
// # Safety
// `x` and `y` must point to `nx` and `ny` readable doubles; `out` must be
// writable.
enum RobcdStatus robcd_dataset_two_sample(const double *x,
                                          size_t nx,
                                          const double *y,
                                          size_t ny,
                                          struct RobcdDataset **out);

// Regression responses with a row-major `n × p` design (include a column
// of ones for an intercept).
//
// # Safety
// `y` must point to `n` doubles, `x` to `n * p` doubles; `out` must be
// writable.
enum RobcdStatus robcd_dataset_regression(const double *y,
                                          size_t n,
                                          const double *x,
                                          size_t p,
                                          struct RobcdDataset **out);

// # Safety
// `d` must be NULL or a dataset handle not yet freed.
void robcd_dataset_free(struct RobcdDataset *d);

// Fits `model` (a model name as accepted by the command line) under the
// Tsallis score with the given γ, or the log score when `gamma` is 0.
// `interest` selects the regression coefficient; pass -1 otherwise.
//
// # Safety
// `data` must be a live dataset handle, `model` a NUL-terminated string,
// and `out` writable.
enum RobcdStatus robcd_fit(const struct RobcdDataset *data,
                           const char *model,
                           double gamma,
                           int64_t interest,
                           struct RobcdFit **out);

// Estimate and standard error of the interest parameter.
//
// # Safety
// `fit` must be a live fit handle; `psi` and `se` writable.
enum RobcdStatus robcd_fit_interest(const struct RobcdFit *fit, double *psi, double *se);

// Fit as a JSON document, or NULL on failure. Free with
// [`robcd_string_free`].
//
// # Safety
// `fit` must be a live fit handle.
char *robcd_fit_json(const struct RobcdFit *fit);

// # Safety
// `f` must be NULL or a fit handle not yet freed.
void robcd_fit_free(struct RobcdFit *f);

// Confidence distribution of the interest parameter on the default grid
// with `grid_points` points (201 when 0). If the profile reveals a better
// optimum than the fit handle holds, the curve is built around that one.
//
// # Safety
// `fit` must be a live fit handle and `out` writable.
enum RobcdStatus robcd_cd_build(const struct RobcdFit *fit,
                                enum RobcdPivot pivot,
                                size_t grid_points,
                                struct RobcdCd **out);

// Reads a confidence object previously produced by [`robcd_cd_json`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum RobcdStatus robcd_cd_from_json(const char *json, struct RobcdCd **out);

// C(ψ).
//
// # Safety
// `cd` must be a live handle and `value` writable.
enum RobcdStatus robcd_cd_cdf(const struct RobcdCd *cd, double psi, double *value);

// Equal-tailed interval at `level`.
//
// # Safety
// `cd` must be a live handle; `lo` and `hi` writable.
enum RobcdStatus robcd_cd_ci(const struct RobcdCd *cd, double level, double *lo, double *hi);

// p-value of H₀: ψ = ψ₀ against the given alternative.
//
// # Safety
// `cd` must be a live handle and `value` writable.
enum RobcdStatus robcd_cd_p_value(const struct RobcdCd *cd,
                                  double psi0,
                                  enum RobcdAlternative alternative,
                                  double *value);

// Confidence object as JSON, or NULL on failure. Free with
// [`robcd_string_free`].
//
// # Safety
// `cd` must be a live handle.
char *robcd_cd_json(const struct RobcdCd *cd);

// # Safety
// `cd` must be NULL or a handle not yet freed.
void robcd_cd_free(struct RobcdCd *cd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBCD_H */
