#ifndef LANGEVIN_KL_H
#define LANGEVIN_KL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum LkStatus {
  LK_STATUS_OK = 0,
  LK_STATUS_NULL_POINTER = 1,
  LK_STATUS_INVALID_ARGUMENT = 2,
  LK_STATUS_INVALID_POTENTIAL = 3,
  LK_STATUS_DIMENSION_MISMATCH = 4,
  LK_STATUS_PLANNING = 5,
  LK_STATUS_NON_FINITE = 6,
  LK_STATUS_UNSTABLE = 7,
  LK_STATUS_SINGULAR_COVARIANCE = 8,
  LK_STATUS_UNSUPPORTED = 9,
  LK_STATUS_PANIC = 10,
  LK_STATUS_INTERNAL = 11,
} LkStatus;

/**
 * Opaque handle to an ensemble of chains.
 */
typedef struct LkEnsemble LkEnsemble;

/**
 * Opaque handle to a target potential.
 */
typedef struct LkPotential LkPotential;

/**
 * A step-size schedule.
 */
typedef struct LkPlan {
  double h;
  uint64_t k;
  double epsilon;
} LkPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Writes the message of the calling thread's last failure into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length
 * without the terminator; 0 when there is no message.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t lk_last_error_message(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *lk_status_string(enum LkStatus status);

/**
 * `U(x) = ½ Σ a_i x_i²`.
 *
 * # Safety
 * `a` must point to `d` doubles; `out` must be valid for writing.
 */
enum LkStatus lk_potential_quadratic_diagonal(const double *a, size_t d, struct LkPotential **out);

/**
 * `U(x) = ½ xᵀAx` with `A` symmetric positive definite, row-major `d × d`.
 *
 * # Safety
 * `a` must point to `d*d` doubles; `out` must be valid for writing.
 */
enum LkStatus lk_potential_quadratic_full(const double *a, size_t d, struct LkPotential **out);

/**
 * Coordinatewise Huber loss with threshold `delta` (`m = 0`, `L = 1`).
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum LkStatus lk_potential_huber(double delta, size_t d, struct LkPotential **out);

/**
 * # Safety
 * `p` must be null or a handle from an `lk_potential_*` constructor that
 * has not been freed.
 */
void lk_potential_free(struct LkPotential *p);

/**
 * Curvature constants and dimension. Any out-pointer may be null.
 *
 * # Safety
 * `p` must be a live handle; non-null out-pointers must be writable.
 */
enum LkStatus lk_potential_constants(const struct LkPotential *p, double *m, double *l, size_t *d);

/**
 * # Safety
 * `x` must point to `d` doubles; `out` must be writable.
 */
enum LkStatus lk_potential_value(const struct LkPotential *p,
                                 const double *x,
                                 size_t d,
                                 double *out);

/**
 * # Safety
 * `x` and `grad` must each point to `d` doubles.
 */
enum LkStatus lk_potential_gradient(const struct LkPotential *p,
                                    const double *x,
                                    size_t d,
                                    double *grad);

/**
 * Strongly convex schedule for `KL ≤ epsilon` from `N(0, I/m)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LkStatus lk_plan_strong(double m, double l, size_t d, double epsilon, struct LkPlan *out);

/**
 * Weakly convex schedule. Pass `INFINITY` for `h_prime` when uncapped.
 *
 * # Safety
 * `out` must be writable.
 */
enum LkStatus lk_plan_weak(double c1,
                           double c2,
                           double h_prime,
                           double kl0,
                           double l,
                           size_t d,
                           double epsilon,
                           struct LkPlan *out);

/**
 * `n_chains` chains started from `N(0, I/m)`; needs `m > 0`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum LkStatus lk_ensemble_new(const struct LkPotential *p,
                              size_t n_chains,
                              uint64_t seed,
                              struct LkEnsemble **out);

/**
 * Chains started from independent coordinates `N(mean_i, var_i)`.
 *
 * # Safety
 * `mean` and `var` must point to `d` doubles; `out` must be writable.
 */
enum LkStatus lk_ensemble_new_gaussian(const struct LkPotential *p,
                                       const double *mean,
                                       const double *var,
                                       size_t d,
                                       size_t n_chains,
                                       uint64_t seed,
                                       struct LkEnsemble **out);

/**
 * Advance every chain by `steps` transitions of size `h`.
 *
 * # Safety
 * `e` must be a live handle.
 */
enum LkStatus lk_ensemble_step(struct LkEnsemble *e, double h, uint64_t steps);

/**
 * Number of chains, dimension and transitions taken so far. Any
 * out-pointer may be null.
 *
 * # Safety
 * `e` must be a live handle; non-null out-pointers must be writable.
 */
enum LkStatus lk_ensemble_shape(const struct LkEnsemble *e,
                                size_t *n_chains,
                                size_t *d,
                                uint64_t *step);

/**
 * Copy the row-major `n_chains × d` states into `out`, which must hold
 * exactly `len = n_chains * d` doubles.
 *
 * # Safety
 * `e` must be a live handle; `out` must point to `len` doubles.
 */
enum LkStatus lk_ensemble_states(const struct LkEnsemble *e, double *out, size_t len);

/**
 * # Safety
 * `e` must be null or a live handle from `lk_ensemble_new*`.
 */
void lk_ensemble_free(struct LkEnsemble *e);

/**
 * `KL(p ‖ q)` in nats between `N(mean_p, cov_p)` and `N(mean_q, cov_q)`.
 *
 * # Safety
 * Means must point to `d` doubles, covariances to `d*d`; `out` writable.
 */
enum LkStatus lk_gaussian_kl(const double *mean_p,
                             const double *cov_p,
                             const double *mean_q,
                             const double *cov_q,
                             size_t d,
                             double *out);

/**
 * Wasserstein-2 distance between two Gaussians.
 *
 * # Safety
 * As for [`lk_gaussian_kl`].
 */
enum LkStatus lk_gaussian_w2(const double *mean_p,
                             const double *cov_p,
                             const double *mean_q,
                             const double *cov_q,
                             size_t d,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANGEVIN_KL_H */
