#ifndef LINKGCN_H
#define LINKGCN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LgStatus {
  LG_STATUS_OK = 0,
  LG_STATUS_NULL_POINTER = 1,
  LG_STATUS_INVALID_ARGUMENT = 2,
  LG_STATUS_IO = 3,
  LG_STATUS_FORMAT = 4,
  LG_STATUS_SHAPE = 5,
  LG_STATUS_NO_POSITIVES = 6,
  LG_STATUS_DIVERGED = 7,
  LG_STATUS_PANIC = 8,
} LgStatus;

/**
 * Scored pivot-neighbour pairs.
 */
typedef struct LgEdgeScores LgEdgeScores;

/**
 * Labeled, unit-normalized embeddings.
 */
typedef struct LgEmbeddingSet LgEmbeddingSet;

/**
 * Trained GCN parameters.
 */
typedef struct LgModel LgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call on the same thread.
 */
const char *lg_last_error(void);

/**
 * Loads embeddings through a JSON manifest.
 *
 * # Safety
 * `manifest` must be a NUL-terminated string; `out` must be writable.
 */
enum LgStatus lg_set_load(const char *manifest, struct LgEmbeddingSet **out);

/**
 * Builds a set from `n` row-major rows of `dim` floats and `n` labels.
 * Rows are unit-normalized.
 *
 * # Safety
 * `features` must hold `n * dim` floats and `labels` `n` integers.
 */
enum LgStatus lg_set_from_rows(const float *features,
                               size_t n,
                               size_t dim,
                               const int64_t *labels,
                               struct LgEmbeddingSet **out);

/**
 * Generates Gaussian identities of the given sizes on the unit sphere.
 *
 * # Safety
 * `class_sizes` must hold `classes` entries; `out` must be writable.
 */
enum LgStatus lg_set_generate(const size_t *class_sizes,
                              size_t classes,
                              size_t dim,
                              double spread,
                              double separation,
                              uint64_t seed,
                              struct LgEmbeddingSet **out);

/**
 * Writes the set's feature and label files next to `manifest`.
 *
 * # Safety
 * `set` must be a live handle and `manifest` a NUL-terminated string.
 */
enum LgStatus lg_set_save(const struct LgEmbeddingSet *set, const char *manifest);

/**
 * Row count, or 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t lg_set_len(const struct LgEmbeddingSet *set);

/**
 * Feature dimension, or 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t lg_set_dim(const struct LgEmbeddingSet *set);

/**
 * Copies the dense label of every row into `labels` (length `lg_set_len`).
 *
 * # Safety
 * `set` must be a live handle; `labels` must have room for every row.
 */
enum LgStatus lg_set_labels(const struct LgEmbeddingSet *set, uint32_t *labels);

/**
 * # Safety
 * `set` must be NULL or a handle not yet freed.
 */
void lg_set_free(struct LgEmbeddingSet *set);

/**
 * Trains on `set`. `config_json` holds a run config (`{"train": {...}}`)
 * or is NULL for defaults.
 *
 * # Safety
 * `set` must be a live handle, `config_json` NULL or NUL-terminated, and
 * `out` writable.
 */
enum LgStatus lg_model_train(const struct LgEmbeddingSet *set,
                             const char *config_json,
                             struct LgModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum LgStatus lg_model_load(const char *path, struct LgModel **out);

/**
 * # Safety
 * `m` must be a live handle and `path` NUL-terminated.
 */
enum LgStatus lg_model_save(const struct LgModel *m, const char *path);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void lg_model_free(struct LgModel *m);

/**
 * Scores every pivot against its `k` nearest neighbours, with `k2` 2-hop
 * neighbours per node and `r` edges per node.
 *
 * # Safety
 * `set` and `m` must be live handles; `out` must be writable.
 */
enum LgStatus lg_score_edges(const struct LgEmbeddingSet *set,
                             const struct LgModel *m,
                             size_t k,
                             size_t k2,
                             size_t r,
                             struct LgEdgeScores **out);

/**
 * Number of scored pairs, or 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t lg_scores_len(const struct LgEdgeScores *s);

/**
 * Reads pair `i`. `label` receives 1 (link), 0 (no link) or -1 (unknown).
 * Any output pointer may be NULL.
 *
 * # Safety
 * `s` must be a live handle; non-NULL outputs must be writable.
 */
enum LgStatus lg_scores_get(const struct LgEdgeScores *s,
                            size_t i,
                            size_t *pivot,
                            size_t *neighbor,
                            double *score,
                            int32_t *label);

/**
 * Edge AP of a score set against its ground-truth bits.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum LgStatus lg_scores_average_precision(const struct LgEdgeScores *s, double *out);

/**
 * # Safety
 * `s` must be NULL or a handle not yet freed.
 */
void lg_scores_free(struct LgEdgeScores *s);

/**
 * Connected components of the pairs scoring at least `tau` over `n` nodes.
 * `assignments` receives `n` cluster ids numbered by first appearance.
 *
 * # Safety
 * `s` must be a live handle; `assignments` must have room for `n` entries.
 */
enum LgStatus lg_merge_links(const struct LgEdgeScores *s,
                             double tau,
                             size_t n,
                             size_t *assignments,
                             size_t *cluster_count);

/**
 * Average precision of `n` scores against 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` must hold `n` entries; `out` must be writable.
 */
enum LgStatus lg_average_precision(const double *scores,
                                   const uint8_t *labels,
                                   size_t n,
                                   double *out);

/**
 * BCubed precision, recall and F of a predicted partition against truth.
 *
 * # Safety
 * `pred` and `truth` must hold `n` entries; outputs must be writable.
 */
enum LgStatus lg_bcubed(const size_t *pred,
                        const size_t *truth,
                        size_t n,
                        double *precision,
                        double *recall,
                        double *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINKGCN_H */
