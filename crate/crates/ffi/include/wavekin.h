#ifndef WAVEKIN_H
#define WAVEKIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; negative values are failures grouped by category.
 */
typedef enum WkStatus {
  WK_STATUS_OK = 0,
  WK_STATUS_NULL_POINTER = -1,
  WK_STATUS_USAGE = -2,
  WK_STATUS_NUMERICAL = -3,
  WK_STATUS_DOMAIN = -4,
  WK_STATUS_IO = -5,
  WK_STATUS_INTERNAL = -70,
  WK_STATUS_PANIC = -99,
} WkStatus;

/**
 * Monte Carlo spectrum.
 */
typedef struct WkMcReport WkMcReport;

/**
 * Model parameters.
 */
typedef struct WkModel WkModel;

/**
 * Kinetic-equation trajectory.
 */
typedef struct WkTrajectory WkTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wk_version(void);

/**
 * Message of the last failure on this thread (empty after a success).
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null; `needed` null or writable.
 */
enum WkStatus wk_last_error(char *buf, uintptr_t len, uintptr_t *needed);

/**
 * Creates a validated model.
 *
 * # Safety
 * `out` must be writable.
 */
enum WkStatus wk_model_new(uintptr_t d,
                           double l,
                           double r_star,
                           double b0,
                           double sigma,
                           double epsilon,
                           struct WkModel **out);

/**
 * Creates a model from a JSON object with keys `d, L, r_star, b0, sigma, epsilon`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum WkStatus wk_model_from_json(const char *json, struct WkModel **out);

/**
 * Serialises a model to JSON.
 *
 * # Safety
 * `model` must come from this library; see [`wk_last_error`] for buffers.
 */
enum WkStatus wk_model_to_json(const struct WkModel *model,
                               char *buf,
                               uintptr_t len,
                               uintptr_t *needed);

/**
 * # Safety
 * `model` must come from this library or be null; it is invalid afterwards.
 */
void wk_model_free(struct WkModel *model);

/**
 * Lattice-sum constant for `d >= 3`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WkStatus wk_lattice_constant(uintptr_t d, double *out);

/**
 * Number of ordered orthogonal pairs in the box `|m|_inf <= box_radius`.
 *
 * # Safety
 * `out` must be writable.
 */
enum WkStatus wk_count_resonant_pairs(uintptr_t d, int64_t box_radius, uint64_t *out);

/**
 * Memory kernel `j` (0..4, the last at the base frequency) at time `tau0`
 * for four damping rates, each `>= 1`.
 *
 * # Safety
 * `rates` must point to four doubles; `out` writable.
 */
enum WkStatus wk_kernel(double tau0, const double *rates, uintptr_t j, double *out);

/**
 * Solves the kinetic equation from zero data with the default solver settings.
 *
 * # Safety
 * `model` must come from this library; `out` writable.
 */
enum WkStatus wk_wke_solve(const struct WkModel *model,
                           double eps,
                           double t_end,
                           struct WkTrajectory **out);

/**
 * Number of stored times and of radii per time.
 *
 * # Safety
 * All pointers must be valid.
 */
enum WkStatus wk_trajectory_shape(const struct WkTrajectory *traj,
                                  uintptr_t *times,
                                  uintptr_t *radii);

/**
 * Copies the radii, the time of step `step` and the solution at that step.
 *
 * # Safety
 * `radii` and `values` must hold as many doubles as reported by
 * [`wk_trajectory_shape`]; `time` writable. Any of the three may be null.
 */
enum WkStatus wk_trajectory_step(const struct WkTrajectory *traj,
                                 uintptr_t step,
                                 double *time,
                                 double *radii,
                                 double *values);

/**
 * # Safety
 * `traj` must come from this library or be null.
 */
void wk_trajectory_free(struct WkTrajectory *traj);

/**
 * Monte Carlo spectrum at the origin on the grid `|m|_inf <= m_cut`, in the
 * long-time regime.
 *
 * # Safety
 * `model` must come from this library; `out` writable.
 */
enum WkStatus wk_simulate(const struct WkModel *model,
                          int64_t m_cut,
                          uintptr_t samples,
                          uintptr_t max_order,
                          uint64_t seed,
                          struct WkMcReport **out);

/**
 * Estimate of the spectrum component of order `order` (0..=4) at the
 * origin with its standard error.
 *
 * # Safety
 * All pointers must be valid.
 */
enum WkStatus wk_mc_component(const struct WkMcReport *report,
                              uintptr_t order,
                              double *mean,
                              double *stderr);

/**
 * First-iterate second moment at the origin with its closed-form reference.
 *
 * # Safety
 * All pointers must be valid.
 */
enum WkStatus wk_mc_first_iterate(const struct WkMcReport *report,
                                  double *mean,
                                  double *stderr,
                                  double *reference);

/**
 * Whole report as JSON.
 *
 * # Safety
 * `report` must come from this library; see [`wk_last_error`] for buffers.
 */
enum WkStatus wk_mc_report_json(const struct WkMcReport *report,
                                char *buf,
                                uintptr_t len,
                                uintptr_t *needed);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
void wk_mc_report_free(struct WkMcReport *report);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WAVEKIN_H */
