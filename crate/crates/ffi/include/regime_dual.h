#ifndef REGIME_DUAL_H
#define REGIME_DUAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RdStatus {
  RD_STATUS_OK = 0,
  RD_STATUS_NULL_POINTER = 1,
  RD_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or incomplete model JSON.
   */
  RD_STATUS_CONFIG = 3,
  RD_STATUS_INVALID_ARGUMENT = 4,
  /**
   * Solver or density diagnostics (bound breach, positivity, support).
   */
  RD_STATUS_NUMERICAL = 5,
  RD_STATUS_PANIC = 6,
} RdStatus;

/**
 * Parsed problem instance.
 */
typedef struct RdModel RdModel;

/**
 * Solved value surface.
 */
typedef struct RdSurface RdSurface;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a model from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be a valid C string and `out` a writable pointer.
 */
enum RdStatus rd_model_from_json(const char *json, struct RdModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`rd_model_from_json`] and not be used afterwards.
 */
void rd_model_free(struct RdModel *model);

/**
 * Solves the value surface on an `n_x × n_t` grid; `m_clamp <= 0` disables
 * the control clamp.
 *
 * # Safety
 * `model` must be a live handle and `out` a writable pointer.
 */
enum RdStatus rd_solve(const struct RdModel *model,
                       uintptr_t n_x,
                       uintptr_t n_t,
                       double m_clamp,
                       struct RdSurface **out);

/**
 * Releases a surface; null is ignored.
 *
 * # Safety
 * `surface` must come from [`rd_solve`] and not be used afterwards.
 */
void rd_surface_free(struct RdSurface *surface);

/**
 * `Λ̂(t, x)` by bilinear interpolation.
 *
 * # Safety
 * `surface` must be a live handle and `out` a writable pointer.
 */
enum RdStatus rd_surface_value(const struct RdSurface *surface, double t, double x, double *out);

/**
 * Optimal jump control `ν̂(t, x, z)`.
 *
 * # Safety
 * `surface` must be a live handle and `out` a writable pointer.
 */
enum RdStatus rd_nu_hat(const struct RdSurface *surface, double t, double x, double z, double *out);

/**
 * Investment `ϖ` and consumption `c` for wealth `v` at `(t, x)`.
 *
 * # Safety
 * `surface` must be a live handle; both outputs must be writable.
 */
enum RdStatus rd_feedback_controls(const struct RdSurface *surface,
                                   double t,
                                   double x,
                                   double v,
                                   double *out_invest,
                                   double *out_consume);

/**
 * Primal value `J = (1/κ) v^κ Λ̂^{1−κ}`.
 *
 * # Safety
 * `surface` must be a live handle and `out` a writable pointer.
 */
enum RdStatus rd_primal_value(const struct RdSurface *surface,
                              double t,
                              double x,
                              double v,
                              double *out);

/**
 * Bounded-likelihood-ratio report as a JSON string; release it with
 * [`rd_string_free`]. A non-positive `budget` means no budget.
 *
 * # Safety
 * `model` must be a live handle and `out` a writable pointer.
 */
enum RdStatus rd_blr_check_json(const struct RdModel *model, double budget, char **out);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void rd_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *rd_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGIME_DUAL_H */
