#ifndef LADRAG_H
#define LADRAG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Edge direction for `ladrag_graph_neighbors`.
 */
typedef enum LadragDirection {
  LADRAG_DIRECTION_OUT = 0,
  LADRAG_DIRECTION_IN = 1,
  LADRAG_DIRECTION_BOTH = 2,
} LadragDirection;

/**
 * Result codes.
 */
typedef enum LadragStatus {
  LADRAG_STATUS_OK = 0,
  LADRAG_STATUS_NULL_ARGUMENT = 1,
  LADRAG_STATUS_INVALID_UTF8 = 2,
  LADRAG_STATUS_PARSE = 3,
  LADRAG_STATUS_INVALID_GRAPH = 4,
  LADRAG_STATUS_UNKNOWN_NODE = 5,
  LADRAG_STATUS_INVALID_QUERY = 6,
  LADRAG_STATUS_INDEX = 7,
  LADRAG_STATUS_IO = 8,
  LADRAG_STATUS_INVALID_ARGUMENT = 9,
  LADRAG_STATUS_PANIC = 99,
} LadragStatus;

/**
 * A BM25 index over node summaries.
 */
typedef struct LadragBm25 LadragBm25;

/**
 * A loaded, validated document graph.
 */
typedef struct LadragGraph LadragGraph;

/**
 * A dense summary index.
 */
typedef struct LadragIndex LadragIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *ladrag_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ladrag_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ladrag_string_free(char *s);

/**
 * Parses and validates a graph from its JSON text.
 *
 * # Safety
 * `json_text` must be a nul-terminated string; `out` must be writable.
 */
enum LadragStatus ladrag_graph_from_json(const char *json_text, struct LadragGraph **out);

/**
 * Reads and validates a graph file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum LadragStatus ladrag_graph_load(const char *path, struct LadragGraph **out);

/**
 * # Safety
 * `graph` must come from this library and not have been freed.
 */
void ladrag_graph_free(struct LadragGraph *graph);

/**
 * Canonical JSON text of the graph.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum LadragStatus ladrag_graph_to_json(const struct LadragGraph *graph, char **out);

/**
 * # Safety
 * `graph` must be a live handle; the outputs must be writable.
 */
enum LadragStatus ladrag_graph_counts(const struct LadragGraph *graph,
                                      uint32_t *pages,
                                      size_t *nodes,
                                      size_t *edges);

/**
 * Runs a JSON graph query; the result is a JSON array of node ids.
 *
 * # Safety
 * `graph` must be a live handle; `query_json` nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_graph_query(const struct LadragGraph *graph,
                                     const char *query_json,
                                     char **out);

/**
 * Neighbors of `node` as a JSON array of ids. `edge_type` may be null for
 * any type.
 *
 * # Safety
 * `graph` must be a live handle; strings nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_graph_neighbors(const struct LadragGraph *graph,
                                         const char *node,
                                         const char *edge_type,
                                         enum LadragDirection direction,
                                         char **out);

/**
 * Recomputes the cached community partition.
 *
 * # Safety
 * `graph` must be a live handle.
 */
enum LadragStatus ladrag_graph_detect_communities(struct LadragGraph *graph, double resolution);

/**
 * The node's community plus its section and continuation neighbors, as a
 * JSON array of ids.
 *
 * # Safety
 * `graph` must be a live handle; `node` nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_graph_contextualize(const struct LadragGraph *graph,
                                             const char *node,
                                             char **out);

/**
 * Embeds every node summary with the built-in hashing embedder.
 *
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum LadragStatus ladrag_index_build_hashing(const struct LadragGraph *graph,
                                             size_t dimension,
                                             struct LadragIndex **out);

/**
 * Parses an index from its JSON text.
 *
 * # Safety
 * `json_text` nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_index_from_json(const char *json_text, struct LadragIndex **out);

/**
 * # Safety
 * `index` must be a live handle; `out` writable.
 */
enum LadragStatus ladrag_index_to_json(const struct LadragIndex *index, char **out);

/**
 * Top-`k` nodes by cosine similarity, as JSON `[{"node", "score"}]`. Only
 * indices built with the hashing embedder can be queried here.
 *
 * # Safety
 * `index` must be a live handle; `query` nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_index_search(const struct LadragIndex *index,
                                      const char *query,
                                      size_t k,
                                      char **out);

/**
 * # Safety
 * `index` must come from this library and not have been freed.
 */
void ladrag_index_free(struct LadragIndex *index);

/**
 * # Safety
 * `graph` must be a live handle; `out` writable.
 */
enum LadragStatus ladrag_bm25_build(const struct LadragGraph *graph, struct LadragBm25 **out);

/**
 * Top-`k` BM25 hits as JSON `[{"node", "score"}]`.
 *
 * # Safety
 * `bm25` must be a live handle; `query` nul-terminated; `out` writable.
 */
enum LadragStatus ladrag_bm25_search(const struct LadragBm25 *bm25,
                                     const char *query,
                                     size_t k,
                                     char **out);

/**
 * # Safety
 * `bm25` must come from this library and not have been freed.
 */
void ladrag_bm25_free(struct LadragBm25 *bm25);

/**
 * 1 when every gold page was retrieved, else 0.
 *
 * # Safety
 * Each array must hold at least its stated length (may be null when 0).
 */
enum LadragStatus ladrag_perfect_recall(const uint32_t *gold,
                                        size_t gold_len,
                                        const uint32_t *retrieved,
                                        size_t retrieved_len,
                                        uint8_t *out);

/**
 * Share of retrieved pages outside the gold set (0 when none retrieved).
 *
 * # Safety
 * Each array must hold at least its stated length (may be null when 0).
 */
enum LadragStatus ladrag_irrelevant_pages_ratio(const uint32_t *gold,
                                                size_t gold_len,
                                                const uint32_t *retrieved,
                                                size_t retrieved_len,
                                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LADRAG_H */
