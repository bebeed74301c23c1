#ifndef SMOOTHLIN_H
#define SMOOTHLIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_DIMENSION_MISMATCH = 3,
  SL_STATUS_SINGULAR_OPERATOR = 4,
  SL_STATUS_CONTRACTION_VIOLATION = 5,
  SL_STATUS_NO_CONVERGENCE = 6,
  SL_STATUS_WINDOW_EXHAUSTED = 7,
  SL_STATUS_NUMERICAL = 8,
  SL_STATUS_PANIC = 9,
} SlStatus;

/**
 * A conjugacy engine with its own row cache. Safe to share between threads.
 */
typedef struct SlEngine SlEngine;

/**
 * A coupled system.
 */
typedef struct SlSystem SlSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *sl_last_error(void);

/**
 * Built-in system with default parameters: "remm", "ex1", "ex2",
 * "end_cfg" or "emo".
 */
enum SlStatus sl_system_builtin(const char *name, struct SlSystem **out);

/**
 * Built-in system from a JSON parameter object such as
 * `{"variant": "ex1", "lambda": 0.5}`.
 */
enum SlStatus sl_system_from_json(const char *json, struct SlSystem **out);

void sl_system_free(struct SlSystem *sys);

enum SlStatus sl_system_dims(const struct SlSystem *sys, size_t *dim_x, size_t *dim_y);

/**
 * Transition operator from time `n` to time `m`, dim_x × dim_x.
 */
enum SlStatus sl_transition(const struct SlSystem *sys,
                            int64_t m,
                            int64_t n,
                            double *out,
                            size_t len);

/**
 * Green kernel at `(m, n)`, dim_x × dim_x.
 */
enum SlStatus sl_green(const struct SlSystem *sys, int64_t m, int64_t n, double *out, size_t len);

/**
 * Coupled solution at time `k` through `(ξ, η)` at time `n`, in either
 * direction. `out_y` may be NULL when dim_y is zero.
 */
enum SlStatus sl_evolve(const struct SlSystem *sys,
                        int64_t k,
                        int64_t n,
                        const double *xi,
                        size_t xi_len,
                        const double *eta,
                        size_t eta_len,
                        double *out_x,
                        size_t out_x_len,
                        double *out_y,
                        size_t out_y_len);

/**
 * Engine over a copy of `sys`. `config_json` may be NULL for defaults.
 */
enum SlStatus sl_engine_new(const struct SlSystem *sys,
                            const char *config_json,
                            struct SlEngine **out);

void sl_engine_free(struct SlEngine *engine);

/**
 * `K_n + J_n + |G(n,n+1)| γ_n`; infinite when it cannot be certified.
 */
enum SlStatus sl_contraction_estimate(const struct SlEngine *engine, int64_t n, double *out);

/**
 * `h̄_n(ξ, η)`, length dim_x.
 */
enum SlStatus sl_bar_h(const struct SlEngine *engine,
                       int64_t n,
                       const double *xi,
                       size_t xi_len,
                       const double *eta,
                       size_t eta_len,
                       double *out,
                       size_t out_len);

/**
 * `h_n(ξ, η)`, length dim_x.
 */
enum SlStatus sl_h(const struct SlEngine *engine,
                   int64_t n,
                   const double *xi,
                   size_t xi_len,
                   const double *eta,
                   size_t eta_len,
                   double *out,
                   size_t out_len);

/**
 * `∂h_n/∂ξ` (dim_x × dim_x) and `∂h_n/∂η` (dim_x × dim_y). `r_tilde` may
 * be NULL when dim_y is zero.
 */
enum SlStatus sl_h_jacobians(const struct SlEngine *engine,
                             int64_t n,
                             const double *xi,
                             size_t xi_len,
                             const double *eta,
                             size_t eta_len,
                             double *r,
                             size_t r_len,
                             double *r_tilde,
                             size_t r_tilde_len);

/**
 * Runs the checker as the command line does. `config_json` is a run
 * configuration (NULL for defaults); `phases` is "check", "conjugate",
 * "derivatives" or "report". The report is returned as JSON in `out_json`,
 * to be released with [`sl_string_free`], and `out_pass` receives 1 when
 * the verdict passes. A failing verdict still returns `SL_STATUS_OK`.
 */
enum SlStatus sl_run(const char *config_json,
                     const char *phases,
                     char **out_json,
                     int32_t *out_pass);

/**
 * Releases a string returned by this library.
 */
void sl_string_free(char *s);

/**
 * Library version, a static string.
 */
const char *sl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMOOTHLIN_H */
