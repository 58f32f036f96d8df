#ifndef PHASEWAVE_H
#define PHASEWAVE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PwForm {
  /**
   * `sum_m e^{i w_m . x} (P_m + i Q_m)`.
   */
  PW_FORM_COMPLEX = 0,
  /**
   * `sum_m P_m cos(w_m . x) + Q_m sin(w_m . x)`.
   */
  PW_FORM_REAL = 1,
} PwForm;

typedef enum PwKernel {
  PW_KERNEL_EXTERIOR = 0,
  PW_KERNEL_INTERIOR_DIRICHLET = 1,
} PwKernel;

/**
 * Result code of every fallible call.
 */
typedef enum PwStatus {
  PW_STATUS_OK = 0,
  PW_STATUS_NULL_POINTER = 1,
  PW_STATUS_INVALID_CONFIG = 2,
  PW_STATUS_DIVERGED = 3,
  PW_STATUS_ORACLE_FAILED = 4,
  PW_STATUS_NUMERIC = 5,
  PW_STATUS_RESONANCE = 6,
  PW_STATUS_IO = 7,
  PW_STATUS_PANIC = 8,
  PW_STATUS_OTHER = 9,
} PwStatus;

/**
 * Opaque coupled ansatz.
 */
typedef struct PwAnsatz PwAnsatz;

/**
 * Opaque boundary-value problem.
 */
typedef struct PwProblem PwProblem;

/**
 * Optimizer settings, mirrored from the library.
 */
typedef struct PwTrainConfig {
  size_t epochs;
  size_t batch_size;
  double lr;
  uint64_t seed;
  double beta_reg;
  double init_scale;
  double lr_decay;
} PwTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *pw_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pw_version(void);

struct PwTrainConfig pw_train_config_default(void);

/**
 * Builds an ansatz. `freqs` holds `n_freqs` vectors of length `dim`;
 * `layers` are the subnet widths, starting with `dim` and ending with 1.
 */
enum PwStatus pw_ansatz_new(enum PwForm form,
                            size_t dim,
                            const double *freqs,
                            size_t n_freqs,
                            const size_t *layers,
                            size_t n_layers,
                            double init_scale,
                            uint64_t seed,
                            struct PwAnsatz **out);

void pw_ansatz_free(struct PwAnsatz *a);

/**
 * Number of trainable parameters, 0 for NULL.
 */
size_t pw_ansatz_param_count(const struct PwAnsatz *a);

/**
 * Input dimension, 0 for NULL.
 */
size_t pw_ansatz_dim(const struct PwAnsatz *a);

/**
 * Evaluates at `n` points laid out `[point][dim]`.
 */
enum PwStatus pw_ansatz_eval(const struct PwAnsatz *a,
                             const double *xs,
                             size_t n,
                             double *out_re,
                             double *out_im);

/**
 * Least-squares fit to `n` samples (`xs` laid out `[point][dim]`, complex
 * labels split into `ys_re`/`ys_im`). Writes up to `history_cap` per-epoch
 * losses to `history` and the epoch count to `history_len`; both may be NULL.
 */
enum PwStatus pw_ansatz_fit(struct PwAnsatz *a,
                            const double *xs,
                            const double *ys_re,
                            const double *ys_im,
                            size_t n,
                            const struct PwTrainConfig *cfg,
                            double *history,
                            size_t history_cap,
                            size_t *history_len);

/**
 * Homogeneous Dirichlet problem on `[-1, 1]` with source
 * `(lambda^2 - mu^2) sin(mu x)` and medium `c sin(m x^2)`.
 */
enum PwStatus pw_problem_dirichlet(double lambda,
                                   double mu,
                                   double c,
                                   double m,
                                   double rho,
                                   struct PwProblem **out);

/**
 * `u'' - lambda^2 u = -(lambda^2 + mu^2) sin(mu x)`, `u(+-1) = 0`.
 */
enum PwStatus pw_problem_elliptic(double lambda, double mu, double rho, struct PwProblem **out);

/**
 * Compact scatterer with outgoing conditions at `+-a`.
 */
enum PwStatus pw_problem_exterior(double lambda,
                                  double mu,
                                  double c,
                                  double a,
                                  double rho,
                                  struct PwProblem **out);

void pw_problem_free(struct PwProblem *p);

/**
 * Trains `a` on the residual at `n_colloc` even points of the domain.
 */
enum PwStatus pw_solve_ode(const struct PwProblem *p,
                           struct PwAnsatz *a,
                           size_t n_colloc,
                           const struct PwTrainConfig *cfg,
                           double *history,
                           size_t history_cap,
                           size_t *history_len);

/**
 * Finite-difference solution on `n_intervals` equal intervals of the
 * problem's domain; writes `n_intervals + 1` nodal values.
 */
enum PwStatus pw_fd_solve(const struct PwProblem *p,
                          size_t n_intervals,
                          double *out_re,
                          double *out_im);

/**
 * Green's function `G(x, x')` of the chosen kernel.
 */
enum PwStatus pw_green_eval(enum PwKernel kind,
                            double lambda,
                            double x,
                            double xp,
                            double *out_re,
                            double *out_im);

/**
 * Runs an experiment described by TOML text and writes its artifacts to
 * `out_dir` (NULL: the config's own directory). Returns `Diverged` or
 * `OracleFailed` when the run finished in that state.
 */
enum PwStatus pw_run_experiment(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PHASEWAVE_H */
