#ifndef GRAPHDIFF_H
#define GRAPHDIFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GD_STATUS_OK = 0,
  GD_STATUS_NULL_POINTER = 1,
  GD_STATUS_INVALID_ARGUMENT = 2,
  GD_STATUS_INVALID_GRAPH = 3,
  GD_STATUS_PARSE = 4,
  GD_STATUS_IO = 5,
  GD_STATUS_CHECKPOINT = 6,
  GD_STATUS_CONFIG = 7,
  GD_STATUS_NUMERIC = 8,
  GD_STATUS_INTERNAL = 9,
  GD_STATUS_PANIC = 10,
} GdStatus;

/**
 * Opaque list of graphs.
 */
typedef struct GdGraphs GdGraphs;

/**
 * Opaque trained model.
 */
typedef struct GdModel GdModel;

/**
 * One labelled edge `i < j` with edge class `label >= 1`.
 */
typedef struct {
  size_t i;
  size_t j;
  size_t label;
} GdEdge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *gd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gd_version(void);

/**
 * Loads a checkpoint written by the `train` or `train-regressor` commands.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
GdStatus gd_model_load(const char *path, GdModel **out);

/**
 * # Safety
 * `model` must come from [`gd_model_load`] and not be freed twice. Null is ignored.
 */
void gd_model_free(GdModel *model);

/**
 * Draws `count` samples. `nodes == 0` draws each node count from the
 * training distribution. The same seed gives the same graphs.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
GdStatus gd_model_sample(const GdModel *model,
                         size_t count,
                         size_t nodes,
                         uint64_t seed,
                         GdGraphs **out);

/**
 * Reads a graph file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
GdStatus gd_graphs_read(const char *path, GdGraphs **out);

/**
 * Writes a graph file.
 *
 * # Safety
 * `graphs` must be a live handle and `path` a NUL-terminated string.
 */
GdStatus gd_graphs_write(const GdGraphs *graphs, const char *path);

/**
 * # Safety
 * `graphs` must come from this library and not be freed twice. Null is ignored.
 */
void gd_graphs_free(GdGraphs *graphs);

/**
 * Number of graphs in the list; 0 for null.
 *
 * # Safety
 * `graphs` must be null or a live handle.
 */
size_t gd_graphs_len(const GdGraphs *graphs);

/**
 * Node count of graph `index`.
 *
 * # Safety
 * `graphs` must be a live handle and `out` a valid pointer.
 */
GdStatus gd_graph_node_count(const GdGraphs *graphs, size_t index, size_t *out);

/**
 * Copies up to `cap` node classes of graph `index` into `buf` and stores
 * the full count in `len`. Pass `cap == 0` to query the size.
 *
 * # Safety
 * `buf` must hold `cap` elements (it may be null when `cap == 0`) and `len`
 * must be a valid pointer.
 */
GdStatus gd_graph_nodes(const GdGraphs *graphs, size_t index, size_t *buf, size_t cap, size_t *len);

/**
 * Copies up to `cap` edges of graph `index` into `buf` and stores the full
 * count in `len`. Edges come in row-major order of `(i, j)`.
 *
 * # Safety
 * As for [`gd_graph_nodes`].
 */
GdStatus gd_graph_edges(const GdGraphs *graphs, size_t index, GdEdge *buf, size_t cap, size_t *len);

/**
 * Scores `generated` against the train and test splits of the config's
 * manifest and returns the `key = value` report as a string owned by the
 * caller, to be released with [`gd_string_free`].
 *
 * # Safety
 * `config` must be a NUL-terminated path, `generated` a live handle and
 * `out` a valid pointer.
 */
GdStatus gd_evaluate(const char *config, const GdGraphs *generated, uint64_t seed, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is ignored.
 */
void gd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHDIFF_H */
