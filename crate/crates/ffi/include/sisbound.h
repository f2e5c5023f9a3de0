#ifndef SISBOUND_H
#define SISBOUND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SisbFamily {
  SISB_FAMILY_ER = 0,
  SISB_FAMILY_BA = 1,
  SISB_FAMILY_NWS = 2,
} SisbFamily;

/**
 * Result codes. The nonzero values match the CLI exit codes where they overlap.
 */
typedef enum SisbStatus {
  SISB_STATUS_OK = 0,
  SISB_STATUS_INVALID_ARGUMENT = 1,
  SISB_STATUS_INPUT = 2,
  SISB_STATUS_NUMERIC = 3,
  SISB_STATUS_RESOURCE = 4,
  SISB_STATUS_NULL_POINTER = 5,
  SISB_STATUS_PANIC = 6,
} SisbStatus;

/**
 * Opaque directed graph.
 */
typedef struct SisbGraph SisbGraph;

/**
 * Opaque per-node rate set.
 */
typedef struct SisbParams SisbParams;

typedef struct SisbBounds {
  size_t n;
  double lambda_max_adjacency;
  double rho1;
  double rho2;
  double delta_min;
  bool strongly_connected;
  size_t solver_iterations;
  double solver_residual;
} SisbBounds;

typedef struct SisbDecay {
  double rho_hat;
  double slope_stderr;
  double window_start;
  double window_end;
  size_t points;
} SisbDecay;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sisb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sisb_version(void);

/**
 * Parses edge-list text (`u v` per line).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum SisbStatus sisb_graph_parse(const char *text, bool bidirect, struct SisbGraph **out);

/**
 * Builds a graph from `len` directed edges `src[k] -> dst[k]` on `n` nodes.
 *
 * # Safety
 * `src` and `dst` must each point to `len` readable values; `out` must be writable.
 */
enum SisbStatus sisb_graph_from_edges(size_t n,
                                      const size_t *src,
                                      const size_t *dst,
                                      size_t len,
                                      struct SisbGraph **out);

/**
 * Random bidirected graph. `p` is the ER edge probability or the NWS shortcut
 * probability; `m` is the BA attachment count; `k` the NWS ring half-degree.
 *
 * # Safety
 * `out` must be writable.
 */
enum SisbStatus sisb_graph_generate(enum SisbFamily family,
                                    size_t n,
                                    double p,
                                    size_t m,
                                    size_t k,
                                    uint64_t seed,
                                    struct SisbGraph **out);

/**
 * New handle holding the largest strongly connected component of `g`.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum SisbStatus sisb_graph_largest_scc(const struct SisbGraph *g, struct SisbGraph **out);

/**
 * # Safety
 * `g` must be null or a handle not yet freed.
 */
void sisb_graph_free(struct SisbGraph *g);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t sisb_graph_node_count(const struct SisbGraph *g);

/**
 * Directed edge count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t sisb_graph_edge_count(const struct SisbGraph *g);

/**
 * # Safety
 * `g` must be null or a live graph handle.
 */
bool sisb_graph_is_strongly_connected(const struct SisbGraph *g);

/**
 * # Safety
 * `out` must be writable.
 */
enum SisbStatus sisb_params_homogeneous(size_t n,
                                        double beta,
                                        double delta,
                                        struct SisbParams **out);

/**
 * Per-node rates copied from two arrays of length `n`.
 *
 * # Safety
 * `beta` and `delta` must each point to `n` readable doubles; `out` must be writable.
 */
enum SisbStatus sisb_params_from_arrays(const double *beta,
                                        const double *delta,
                                        size_t n,
                                        struct SisbParams **out);

/**
 * `beta_i = c / lambda_max(A)`, `delta_i = 1`.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum SisbStatus sisb_params_beta_fraction(const struct SisbGraph *g,
                                          double c,
                                          struct SisbParams **out);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void sisb_params_free(struct SisbParams *p);

/**
 * First- and second-order decay-rate bounds.
 *
 * # Safety
 * `g` and `params` must be live handles; `out` must be writable.
 */
enum SisbStatus sisb_bounds(const struct SisbGraph *g,
                            const struct SisbParams *params,
                            struct SisbBounds *out);

/**
 * Exact decay rate; `max_n = 0` selects the library default limit.
 *
 * # Safety
 * `g` and `params` must be live handles; `out` must be writable.
 */
enum SisbStatus sisb_exact_decay_rate(const struct SisbGraph *g,
                                      const struct SisbParams *params,
                                      size_t max_n,
                                      double *out);

/**
 * Monte Carlo decay-rate estimate from an all-infected start with the
 * automatic fit window.
 *
 * # Safety
 * `g` and `params` must be live handles; `out` must be writable.
 */
enum SisbStatus sisb_simulate_decay(const struct SisbGraph *g,
                                    const struct SisbParams *params,
                                    size_t paths,
                                    double horizon,
                                    double grid_dt,
                                    uint64_t seed,
                                    struct SisbDecay *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SISBOUND_H */
