#ifndef BALINT_H
#define BALINT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  BI_STATUS_OK = 0,
  BI_STATUS_NULL_POINTER = 1,
  BI_STATUS_INVALID_UTF8 = 2,
  BI_STATUS_PARAMETER = 3,
  BI_STATUS_UNDEFINED_MOMENT = 4,
  BI_STATUS_DOMAIN = 5,
  BI_STATUS_NO_MGF = 6,
  BI_STATUS_UNSUPPORTED = 7,
  BI_STATUS_INDEX = 8,
  BI_STATUS_WRONG_LINK = 9,
  BI_STATUS_ENGINE_MISMATCH = 10,
  BI_STATUS_NO_ROOT = 11,
  BI_STATUS_OUT_OF_RANGE = 12,
  BI_STATUS_CONFIG = 13,
  BI_STATUS_IO = 14,
  BI_STATUS_PANIC = 15,
} BiStatus;

typedef enum {
  BI_LINK_IDENTITY = 0,
  BI_LINK_LOG = 1,
  BI_LINK_LOGIT = 2,
} BiLink;

typedef enum {
  BI_CODING_REFERENCE_CELL = 0,
  BI_CODING_EFFECT = 1,
  BI_CODING_WEIGHTED_EFFECT = 2,
} BiCoding;

typedef enum {
  BI_CLAMP_CLAMP_TO_UNIT = 0,
  BI_CLAMP_REJECT_OUT_OF_RANGE = 1,
} BiClamp;

typedef enum {
  BI_METHOD_LINEAR_SCALE = 0,
  BI_METHOD_LOG_CLOSED_FORM = 1,
  BI_METHOD_NUMERIC = 2,
} BiMethod;

/**
 * Opaque model handle.
 */
typedef struct BiDgp BiDgp;

/**
 * `n_mc == 0` selects the exact engine.
 */
typedef struct {
  size_t n_mc;
} BiEngine;

typedef struct {
  double beta0;
  BiMethod method;
  double residual;
  size_t iterations;
  double mc_se;
  /**
   * Bit set of warning flags, see `balint::Warnings`.
   */
  uint32_t warnings;
} BiSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty model with a normal outcome of unit sd.
 *
 * # Safety
 * `out` must be a valid pointer. The handle is released with [`bi_dgp_free`].
 */
BiStatus bi_dgp_new(BiLink link, double target_mean, BiDgp **out);

/**
 * Builds a model from a single-scenario TOML config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
BiStatus bi_dgp_from_config(const char *toml, BiDgp **out);

/**
 * # Safety
 * `h` must come from this library or be null.
 */
void bi_dgp_free(BiDgp *h);

/**
 * # Safety
 * `h` must be a live handle and `name` a NUL-terminated string.
 */
BiStatus bi_dgp_add_bernoulli(BiDgp *h, const char *name, double p, double coef);

/**
 * # Safety
 * `h` must be a live handle and `name` a NUL-terminated string.
 */
BiStatus bi_dgp_add_uniform(BiDgp *h, const char *name, double a, double b, double coef);

/**
 * # Safety
 * `h` must be a live handle and `name` a NUL-terminated string.
 */
BiStatus bi_dgp_add_normal(BiDgp *h, const char *name, double mu, double sigma, double coef);

/**
 * # Safety
 * `h` must be a live handle and `name` a NUL-terminated string.
 */
BiStatus bi_dgp_add_gamma(BiDgp *h, const char *name, double shape, double rate, double coef);

/**
 * # Safety
 * `h` must be a live handle and `name` a NUL-terminated string.
 */
BiStatus bi_dgp_add_cauchy(BiDgp *h, const char *name, double location, double scale, double coef);

/**
 * Adds a categorical with `levels` probabilities and `levels - 1`
 * coefficients.
 *
 * # Safety
 * `probs` must point to `levels` doubles and `coefs` to `levels - 1`.
 */
BiStatus bi_dgp_add_categorical(BiDgp *h,
                                const char *name,
                                const double *probs,
                                size_t levels,
                                const double *coefs,
                                BiCoding coding);

/**
 * # Safety
 * `h` must be a live handle.
 */
BiStatus bi_dgp_set_normal_outcome(BiDgp *h, double sd);

/**
 * # Safety
 * `h` must be a live handle.
 */
BiStatus bi_dgp_set_bernoulli_outcome(BiDgp *h, BiClamp clamp);

/**
 * Solves the balancing intercept. `tol <= 0` selects the engine default.
 * Monte Carlo draws come from stream 0 of `seed`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
BiStatus bi_solve(const BiDgp *h,
                  BiMethod method,
                  BiEngine engine,
                  double tol,
                  uint64_t seed,
                  BiSolution *out);

/**
 * Achieved marginal mean `E[g^-1(beta0 + beta . X)]` and its Monte Carlo
 * standard error (zero under the exact engine).
 *
 * # Safety
 * `h` must be a live handle; `value` and `se` valid pointers.
 */
BiStatus bi_expectation(const BiDgp *h,
                        double beta0,
                        BiEngine engine,
                        uint64_t seed,
                        double *value,
                        double *se);

/**
 * Runs the scenario grid of a TOML config and returns the result CSV.
 * `workers == 0` keeps the config's value. Free the string with
 * [`bi_string_free`].
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out_csv` a valid pointer.
 */
BiStatus bi_simulate_config(const char *toml, size_t workers, char **out_csv);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void bi_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *bi_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BALINT_H */
