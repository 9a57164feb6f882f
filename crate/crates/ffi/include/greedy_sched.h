#ifndef GREEDY_SCHED_H
#define GREEDY_SCHED_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_POINTER = 1,
  GS_STATUS_INVALID_ARGUMENT = 2,
  GS_STATUS_PARSE = 3,
  GS_STATUS_OUTSIDE_REGION = 4,
  GS_STATUS_SOLVER = 5,
  GS_STATUS_INVARIANT_VIOLATION = 6,
  GS_STATUS_IO = 7,
  GS_STATUS_BUFFER_TOO_SMALL = 8,
  GS_STATUS_PANIC = 9,
} GsStatus;

/**
 * Opaque conflict graph.
 */
typedef struct GsGraph GsGraph;

/**
 * Opaque result of one simulation run.
 */
typedef struct GsSimResult GsSimResult;

typedef struct GsVerdict {
  bool member;
  bool boundary;
  double value;
} GsVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *gs_last_error(void);

/**
 * Graph on links `1..=n` with `edge_count` pairs read from `edges`
 * (`2 * edge_count` entries).
 *
 * # Safety
 * `edges` must hold `2 * edge_count` values and `out` must be writable.
 */
enum GsStatus gs_graph_new(size_t n,
                           const uint32_t *edges,
                           size_t edge_count,
                           struct GsGraph **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum GsStatus gs_graph_ring(size_t n, struct GsGraph **out);

/**
 * The eight-link bipartite example graph.
 *
 * # Safety
 * `out` must be writable.
 */
enum GsStatus gs_graph_bipartite8(struct GsGraph **out);

/**
 * `ring:<n>`, `bipartite8`, or a path to an edge-list file.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` writable.
 */
enum GsStatus gs_graph_from_spec(const char *spec, struct GsGraph **out);

/**
 * Number of links, or 0 for a null graph.
 *
 * # Safety
 * `g` must be null or a live graph.
 */
size_t gs_graph_link_count(const struct GsGraph *g);

/**
 * # Safety
 * `g` must be null or a graph not yet freed.
 */
void gs_graph_free(struct GsGraph *g);

/**
 * Largest weighted closed-neighbourhood load under `priority`.
 *
 * # Safety
 * Arrays must hold `n` entries; `out` must be writable.
 */
enum GsStatus gs_weighted_norm(const struct GsGraph *g,
                               const uint32_t *priority_vec,
                               const double *rate,
                               size_t n,
                               double *out);

/**
 * Whether some static priority stabilises `rate`. `certificate` may be null;
 * otherwise it receives the best priority vector.
 *
 * # Safety
 * Arrays must hold `n` entries; `out` must be writable.
 */
enum GsStatus gs_test_feasibility(const struct GsGraph *g,
                                  const double *rate,
                                  size_t n,
                                  struct GsVerdict *out,
                                  uint32_t *certificate);

/**
 * Priority vector of least weighted norm, written to `priority_out`.
 *
 * # Safety
 * Arrays must hold `n` entries; `norm` must be writable.
 */
enum GsStatus gs_min_norm_priority(const struct GsGraph *g,
                                   const double *rate,
                                   size_t n,
                                   uint32_t *priority_out,
                                   double *norm);

/**
 * Greedy schedule over the links in `occupied` under `priority`.
 *
 * # Safety
 * `priority_vec` must hold `n` entries; `out` must be writable.
 */
enum GsStatus gs_greedy_schedule(const struct GsGraph *g,
                                 const uint32_t *priority_vec,
                                 size_t n,
                                 uint64_t occupied,
                                 uint64_t *out);

/**
 * Independent set of largest total queue.
 *
 * # Safety
 * `queues` must hold `n` entries; `out` must be writable.
 */
enum GsStatus gs_max_weight_schedule(const struct GsGraph *g,
                                     const uint64_t *queues,
                                     size_t n,
                                     uint64_t *out);

/**
 * Two-priority assignment. Writes the first class's rate share to `x_out`,
 * both priority vectors, and the achieved objective to `t_out`.
 *
 * # Safety
 * Arrays must hold `n` entries; `t_out` must be writable.
 */
enum GsStatus gs_em_assign(const struct GsGraph *g,
                           const double *rate,
                           size_t n,
                           size_t restarts,
                           uint64_t seed,
                           double *x_out,
                           uint32_t *p1_out,
                           uint32_t *p2_out,
                           double *t_out);

/**
 * One run of a JSON simulation config (same fields as the CLI's `--config`).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` writable.
 */
enum GsStatus gs_simulate(const char *config_json, struct GsSimResult **out);

/**
 * # Safety
 * `r` must be null or a result not yet freed.
 */
void gs_sim_result_free(struct GsSimResult *r);

/**
 * Largest queue at the horizon, or 0 for null.
 *
 * # Safety
 * `r` must be null or a live result.
 */
uint64_t gs_sim_result_final_max_queue(const struct GsSimResult *r);

/**
 * Growth rate of the largest queue over the second half of the run.
 *
 * # Safety
 * `r` must be null or a live result.
 */
double gs_sim_result_slope(const struct GsSimResult *r);

/**
 * Copies the final queue lengths. `len` must be at least the link count;
 * `BUFFER_TOO_SMALL` otherwise.
 *
 * # Safety
 * `buf` must hold `len` entries.
 */
enum GsStatus gs_sim_result_final_queues(const struct GsSimResult *r, uint64_t *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREEDY_SCHED_H */
