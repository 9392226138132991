#ifndef REFLECTAL_H
#define REFLECTAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ReflectalStatus {
  REFLECTAL_STATUS_OK = 0,
  REFLECTAL_STATUS_NULL_POINTER = 1,
  REFLECTAL_STATUS_INVALID_ARGUMENT = 2,
  REFLECTAL_STATUS_DIMENSION_MISMATCH = 3,
  REFLECTAL_STATUS_OUTSIDE_DOMAIN = 4,
  REFLECTAL_STATUS_NUMERICAL_FAILURE = 5,
  REFLECTAL_STATUS_CONFIG_INVALID = 6,
  REFLECTAL_STATUS_IO = 7,
  REFLECTAL_STATUS_PANIC = 8,
  REFLECTAL_STATUS_OTHER = 9,
} ReflectalStatus;

typedef struct ReflectalCoefficients ReflectalCoefficients;

typedef struct ReflectalDomain ReflectalDomain;

typedef struct ReflectalTrajectory ReflectalTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *reflectal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *reflectal_version(void);

/**
 * The closed interval `[a, b]`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum ReflectalStatus reflectal_domain_interval(double a, double b, struct ReflectalDomain **out);

/**
 * The closed Euclidean ball with `dim` center coordinates.
 *
 * # Safety
 * `center` must point to `dim` doubles and `out` must be writable.
 */
enum ReflectalStatus reflectal_domain_ball(const double *center,
                                           uintptr_t dim,
                                           double radius,
                                           struct ReflectalDomain **out);

/**
 * # Safety
 * `domain` must be NULL or a handle from this library not yet freed.
 */
void reflectal_domain_free(struct ReflectalDomain *domain);

/**
 * # Safety
 * The handle must be NULL or live.
 */
uintptr_t reflectal_domain_dim(const struct ReflectalDomain *domain);

/**
 * Constraint function at `x`.
 *
 * # Safety
 * `x` must point to `dim` doubles and `out` must be writable.
 */
enum ReflectalStatus reflectal_domain_phi(const struct ReflectalDomain *domain,
                                          const double *x,
                                          uintptr_t dim,
                                          double *out);

/**
 * Euclidean projection of `x` onto the closed domain.
 *
 * # Safety
 * `x` and `out` must point to `dim` doubles each.
 */
enum ReflectalStatus reflectal_domain_project(const struct ReflectalDomain *domain,
                                              const double *x,
                                              uintptr_t dim,
                                              double *out);

/**
 * Named coefficient preset. `params_json` is a JSON object of parameter
 * overrides, or NULL for the defaults.
 *
 * # Safety
 * `name` and `params_json` (if non-NULL) must be NUL-terminated strings.
 */
enum ReflectalStatus reflectal_preset_new(const char *name,
                                          const char *params_json,
                                          struct ReflectalCoefficients **out);

/**
 * # Safety
 * `coeffs` must be NULL or a handle from this library not yet freed.
 */
void reflectal_preset_free(struct ReflectalCoefficients *coeffs);

/**
 * Simulate one reflected path on a uniform grid of `n_steps` over `[s, t]`.
 * Noise comes from the trajectory stream `(seed, index)`.
 *
 * # Safety
 * Handles must be valid, `x` must point to `dim` doubles and `out` must be
 * writable.
 */
enum ReflectalStatus reflectal_integrate_reflected(const struct ReflectalCoefficients *coeffs,
                                                   const struct ReflectalDomain *domain,
                                                   const double *x,
                                                   uintptr_t dim,
                                                   double epsilon,
                                                   double s,
                                                   double t,
                                                   uintptr_t n_steps,
                                                   uint64_t seed,
                                                   uint64_t index,
                                                   struct ReflectalTrajectory **out);

/**
 * Number of grid nodes (`n_steps + 1`).
 *
 * # Safety
 * The handle must be NULL or live.
 */
uintptr_t reflectal_trajectory_len(const struct ReflectalTrajectory *traj);

/**
 * # Safety
 * The handle must be NULL or live.
 */
uintptr_t reflectal_trajectory_dim(const struct ReflectalTrajectory *traj);

/**
 * Copy the state at node `i` into `out` (`dim` doubles).
 *
 * # Safety
 * `out` must point to `dim` writable doubles.
 */
enum ReflectalStatus reflectal_trajectory_state(const struct ReflectalTrajectory *traj,
                                                uintptr_t i,
                                                double *out,
                                                uintptr_t dim);

/**
 * Accumulated reflection `K` at node `i`, or NaN for a bad handle or index.
 *
 * # Safety
 * The handle must be NULL or live.
 */
double reflectal_trajectory_k(const struct ReflectalTrajectory *traj, uintptr_t i);

/**
 * # Safety
 * `traj` must be NULL or a handle from this library not yet freed.
 */
void reflectal_trajectory_free(struct ReflectalTrajectory *traj);

/**
 * Discrete action of a path of `n_steps + 1` points stored row-major in
 * `points` (`(n_steps + 1) * dim` doubles).
 *
 * # Safety
 * Handles must be valid; `points` must hold the stated number of doubles.
 */
enum ReflectalStatus reflectal_evaluate_action(const struct ReflectalCoefficients *coeffs,
                                               const struct ReflectalDomain *domain,
                                               const double *points,
                                               uintptr_t dim,
                                               double s,
                                               double t,
                                               uintptr_t n_steps,
                                               double *out);

/**
 * Validate and run a JSON experiment config, writing outputs to its
 * `output_dir` (or `error.json` there on failure).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string.
 */
enum ReflectalStatus reflectal_run_config(const char *config_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFLECTAL_H */
