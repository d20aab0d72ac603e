/* C interface to the ltpe integrators. Handles are opaque; every call returns an LtpeStatus and leaves a message for ltpe_last_error_message on failure. */

#pragma once

/* Generated with cbindgen:0.26.0 */

/* Generated by the crate build script; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Test functions addressable over the ABI, in the library's order.
 */
typedef enum LtpePhi {
  LTPE_PHI_ATAN_NORM = 0,
  LTPE_PHI_GAUSS = 1,
  LTPE_PHI_COS_NORM = 2,
  LTPE_PHI_SIN_NORM_SQ = 3,
} LtpePhi;

/**
 * Status of a call. Mirrors the library's error cases; anything the map
 * below does not name comes back as `INTERNAL`.
 */
typedef enum LtpeStatus {
  LTPE_STATUS_OK = 0,
  LTPE_STATUS_NULL_POINTER = 1,
  LTPE_STATUS_INVALID_PARAMETER = 2,
  LTPE_STATUS_DIMENSION_MISMATCH = 3,
  LTPE_STATUS_NOT_DISSIPATIVE = 4,
  LTPE_STATUS_STEP_TOO_LARGE = 5,
  LTPE_STATUS_STEP_FAILURE = 6,
  LTPE_STATUS_INTERNAL = 7,
} LtpeStatus;

/**
 * Opaque model handle.
 */
typedef struct LtpeModel LtpeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; never free it.
 */
const char *ltpe_last_error_message(void);

/**
 * Scalar stochastic Ginzburg-Landau model.
 */
enum LtpeStatus ltpe_model_ginzburg_landau(double alpha,
                                           double sigma,
                                           double x0,
                                           struct LtpeModel **out);

/**
 * Scalar mean-reverting model with quadratic noise.
 */
enum LtpeStatus ltpe_model_mean_reverting(double b,
                                          double alpha,
                                          double beta,
                                          double sigma,
                                          double x0,
                                          struct LtpeModel **out);

/**
 * Finite-difference Allen-Cahn chain on `k - 1` interior nodes.
 */
enum LtpeStatus ltpe_model_allen_cahn(size_t k, struct LtpeModel **out);

/**
 * Release a model handle. A null pointer is a no-op.
 */
void ltpe_model_free(struct LtpeModel *model);

/**
 * State dimension of the model.
 */
enum LtpeStatus ltpe_model_dim(const struct LtpeModel *model, size_t *out);

/**
 * Largest admissible step size for the given scheme knobs. `out_binding`,
 * when non-null, receives a pointer to a static name of the binding bound;
 * it must not be freed.
 */
enum LtpeStatus ltpe_max_stable_stepsize(const struct LtpeModel *model,
                                         double theta,
                                         double p,
                                         double kappa,
                                         double *out_h_max,
                                         const char **out_binding);

/**
 * One projected step: reads `y[dim]` and `dw[noise_dim]`, writes `out[dim]`.
 */
enum LtpeStatus ltpe_step_once(const struct LtpeModel *model,
                               double theta,
                               double h,
                               const double *y,
                               const double *dw,
                               double *out);

/**
 * Monte Carlo mean of a test function at the horizon, with its 95%
 * half-width. Deterministic in `seed`.
 */
enum LtpeStatus ltpe_expectation(const struct LtpeModel *model,
                                 double theta,
                                 double h,
                                 enum LtpePhi phi,
                                 size_t trajectories,
                                 double t_horizon,
                                 uint64_t seed,
                                 double *out_mean,
                                 double *out_half_width);

/**
 * Endpoint samples of a scalar model: writes `trajectories` values into
 * `out`. Fails with `DIMENSION_MISMATCH` on multi-dimensional models.
 */
enum LtpeStatus ltpe_endpoint_samples(const struct LtpeModel *model,
                                      double theta,
                                      double h,
                                      size_t trajectories,
                                      double t_horizon,
                                      uint64_t seed,
                                      double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
