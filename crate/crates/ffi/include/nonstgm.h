#ifndef NONSTGM_H
#define NONSTGM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a fallible call.
 */
typedef enum {
  NSG_STATUS_OK = 0,
  NSG_STATUS_NULL_POINTER = 1,
  NSG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Instability, singular systems, solver non-convergence.
   */
  NSG_STATUS_NUMERIC = 3,
  NSG_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  NSG_STATUS_PANIC = 5,
} NsgStatus;

/**
 * Which builtin model [`nsg_model_builtin`] returns.
 */
typedef enum {
  NSG_BUILTIN_SMALL = 0,
  NSG_BUILTIN_LARGE = 1,
} NsgBuiltin;

/**
 * How [`nsg_select_graph`] combines the two orientations of a pair.
 */
typedef enum {
  NSG_RULE_AND = 0,
  NSG_RULE_OR = 1,
} NsgRule;

/**
 * Edge attribute reported by [`nsg_graph_edge`].
 */
typedef enum {
  NSG_EDGE_INVALID = -1,
  NSG_EDGE_NONE = 0,
  NSG_EDGE_TIME_INVARIANT = 1,
  NSG_EDGE_TIME_VARYING = 2,
} NsgEdge;

typedef struct NsgGraph NsgGraph;

typedef struct NsgModel NsgModel;

typedef struct NsgPanel NsgPanel;

typedef struct NsgWeights NsgWeights;

/**
 * Estimation settings. Obtain defaults from
 * [`nsg_estimation_options_default`] and adjust fields.
 */
typedef struct {
  /**
   * Window half-width; 0 selects `ceil(sqrt(n))`.
   */
  size_t window;
  size_t nu;
  size_t folds;
  size_t stride;
  size_t grid_len;
  double grid_ratio;
  double tol;
  size_t max_iter;
  /**
   * Non-zero: one λ per node shared across frequencies.
   */
  uint8_t shared_lambda;
  /**
   * Non-zero: fit half the frequencies and mirror the rest.
   */
  uint8_t half_grid;
} NsgEstimationOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nsg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nsg_version(void);

NsgStatus nsg_model_builtin(NsgBuiltin which, NsgModel **out);

/**
 * Parses a model from TOML text.
 *
 * # Safety
 * `toml` must be null or a valid NUL-terminated string.
 */
NsgStatus nsg_model_from_toml(const char *toml, NsgModel **out);

/**
 * Dimension `p` of a model, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nsg_model_dim(const NsgModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void nsg_model_free(NsgModel *model);

/**
 * The ground-truth graph implied by the model's coefficients.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
NsgStatus nsg_true_graph(const NsgModel *model, NsgGraph **out);

/**
 * Simulates `n` observations after `burn_in` discarded samples.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
NsgStatus nsg_simulate(const NsgModel *model,
                       size_t n,
                       size_t burn_in,
                       uint64_t seed,
                       NsgPanel **out);

/**
 * Wraps caller data (`n × p`, row-major) as a panel; the data are copied.
 *
 * # Safety
 * `data` must point to `n * p` readable doubles.
 */
NsgStatus nsg_panel_from_data(const double *data, size_t n, size_t p, NsgPanel **out);

/**
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t nsg_panel_n(const NsgPanel *panel);

/**
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t nsg_panel_p(const NsgPanel *panel);

/**
 * Copies the panel into `out` (row-major, `len` must equal `n * p`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
NsgStatus nsg_panel_copy_data(const NsgPanel *panel, double *out, size_t len);

/**
 * # Safety
 * `panel` must be null or a handle not yet freed.
 */
void nsg_panel_free(NsgPanel *panel);

NsgEstimationOptions nsg_estimation_options_default(void);

/**
 * Runs the node-wise regressions on a panel and aggregates the weight
 * matrices. `options` may be null for defaults.
 *
 * # Safety
 * `panel` and `options` must be null or valid.
 */
NsgStatus nsg_estimate(const NsgPanel *panel,
                       const NsgEstimationOptions *options,
                       NsgWeights **out);

/**
 * # Safety
 * `weights` must be null or a live handle.
 */
size_t nsg_weights_dim(const NsgWeights *weights);

/**
 * Copies `W_self` and `W_other` (row-major `p × p`); either destination may
 * be null to skip it.
 *
 * # Safety
 * Non-null destinations must point to `len` writable doubles.
 */
NsgStatus nsg_weights_copy(const NsgWeights *weights, double *w_self, double *w_other, size_t len);

/**
 * # Safety
 * `weights` must be null or a handle not yet freed.
 */
void nsg_weights_free(NsgWeights *weights);

/**
 * Selects the attributed graph. A negative threshold selects the rank-gap
 * rule for that matrix.
 *
 * # Safety
 * `weights` must be null or a live handle.
 */
NsgStatus nsg_select_graph(const NsgWeights *weights,
                           NsgRule rule,
                           double edge_threshold,
                           double ns_threshold,
                           NsgGraph **out);

/**
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t nsg_graph_dim(const NsgGraph *graph);

/**
 * 1 if node `a` is nonstationary, 0 if not, -1 for null or out of range.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
int32_t nsg_graph_is_nonstationary(const NsgGraph *graph, size_t a);

/**
 * Attribute of the edge `{a, b}`.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
NsgEdge nsg_graph_edge(const NsgGraph *graph, size_t a, size_t b);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void nsg_graph_free(NsgGraph *graph);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NONSTGM_H */
