/* C interface to the trwmrf pairwise-MRF toolkit. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Inference engine selector for [`trwmrf_infer`].
 */
typedef enum TrwmrfEngine {
  /**
   * Reweighted sum-product with uniform-spanning-tree edge weights.
   */
  TRWMRF_ENGINE_TRW = 0,
  /**
   * Ordinary sum-product (unit edge weights).
   */
  TRWMRF_ENGINE_BP = 1,
  /**
   * Exact marginals (enumeration or grid transfer chain).
   */
  TRWMRF_ENGINE_EXACT = 2,
} TrwmrfEngine;

/**
 * Result codes returned by every fallible entry point.
 */
typedef enum TrwmrfStatus {
  TRWMRF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TRWMRF_STATUS_NULL_ARGUMENT = 1,
  /**
   * Malformed input: bad UTF-8, bad file contents, shape mismatch.
   */
  TRWMRF_STATUS_INVALID_INPUT = 2,
  /**
   * Inference or linear algebra failed numerically.
   */
  TRWMRF_STATUS_NUMERICAL_FAILURE = 3,
  /**
   * A provided buffer was too small.
   */
  TRWMRF_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A panic was caught at the boundary; state is unspecified.
   */
  TRWMRF_STATUS_INTERNAL = 5,
} TrwmrfStatus;

/**
 * Opaque marginal-table handle.
 */
typedef struct TrwmrfMarginals TrwmrfMarginals;

/**
 * Opaque model handle (graph plus potential tables).
 */
typedef struct TrwmrfModel TrwmrfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message on this thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full length needed,
 * including the terminator.
 */
size_t trwmrf_last_error(char *buf, size_t len);

/**
 * Parse a model from its text representation.
 */
enum TrwmrfStatus trwmrf_model_from_string(const char *text, struct TrwmrfModel **out);

/**
 * Load a model from a file in the text format.
 */
enum TrwmrfStatus trwmrf_model_load(const char *path, struct TrwmrfModel **out);

/**
 * Draw a random two-state coupled field on a grid: spin couplings uniform
 * on `[0, gamma]` when `attractive` is nonzero, `[-gamma, gamma]`
 * otherwise; node terms zero.
 */
enum TrwmrfStatus trwmrf_model_sample_grid(size_t rows,
                                           size_t cols,
                                           int attractive,
                                           double gamma,
                                           uint64_t seed,
                                           struct TrwmrfModel **out);

/**
 * Serialize a model; the returned string must be released with
 * [`trwmrf_string_free`].
 */
enum TrwmrfStatus trwmrf_model_to_string(const struct TrwmrfModel *model, char **out);

void trwmrf_string_free(char *s);

void trwmrf_model_free(struct TrwmrfModel *model);

size_t trwmrf_model_num_nodes(const struct TrwmrfModel *model);

size_t trwmrf_model_num_edges(const struct TrwmrfModel *model);

size_t trwmrf_model_num_states(const struct TrwmrfModel *model);

/**
 * Compute marginals with the selected engine. `converged_out` (optional)
 * receives 1 when message passing reached the tolerance. Pass
 * `tolerance <= 0` or `max_iter == 0` for the defaults.
 */
enum TrwmrfStatus trwmrf_infer(const struct TrwmrfModel *model,
                               enum TrwmrfEngine engine,
                               double tolerance,
                               size_t max_iter,
                               struct TrwmrfMarginals **out,
                               int *converged_out);

void trwmrf_marginals_free(struct TrwmrfMarginals *marg);

/**
 * Copy the `m` node-marginal probabilities of one node into `buf`.
 */
enum TrwmrfStatus trwmrf_marginals_node(const struct TrwmrfMarginals *marg,
                                        size_t node,
                                        double *buf,
                                        size_t buf_len);

/**
 * Copy the `m*m` joint table of one edge (row-major in the smaller
 * endpoint's state) into `buf`.
 */
enum TrwmrfStatus trwmrf_marginals_edge(const struct TrwmrfMarginals *marg,
                                        size_t edge,
                                        double *buf,
                                        size_t buf_len);

/**
 * Denoise one observation vector against the model: conditions on the
 * observations through the Gaussian-mixture channel with SNR `alpha`,
 * runs the selected engine on the shifted model, and writes the
 * posterior-mean estimates (one per node) into `z_out`.
 *
 * `nu` and `sigma2` give the per-state component means and variances and
 * must have `trwmrf_model_num_states(model)` entries; `y` and `z_out`
 * must have one entry per node.
 */
enum TrwmrfStatus trwmrf_denoise(const struct TrwmrfModel *model,
                                 enum TrwmrfEngine engine,
                                 const double *nu,
                                 const double *sigma2,
                                 double alpha,
                                 const double *y,
                                 size_t y_len,
                                 double *z_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
