#ifndef BMEMBED_H
#define BMEMBED_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum BmStatus {
  BM_STATUS_OK = 0,
  BM_STATUS_NULL_POINTER = 1,
  BM_STATUS_INVALID_ARGUMENT = 2,
  BM_STATUS_IO = 3,
  BM_STATUS_FORMAT = 4,
  BM_STATUS_NON_FINITE = 5,
  BM_STATUS_ZERO_VECTOR = 6,
  BM_STATUS_UNDEFINED = 7,
  BM_STATUS_BUFFER_TOO_SMALL = 8,
  BM_STATUS_INTERNAL = 9,
} BmStatus;

typedef struct BmAdapter BmAdapter;

typedef struct BmEmbedder BmEmbedder;

typedef struct BmIndex BmIndex;

/**
 * One search hit: a position into the index's chunk list and its score.
 */
typedef struct BmHit {
  uint32_t chunk;
  double score;
} BmHit;

/**
 * A fused entry: the caller's document id and its RRF score.
 */
typedef struct BmFused {
  uint64_t id;
  double score;
} BmFused;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *bm_last_error(void);

/**
 * Library version as a static string.
 */
const char *bm_version(void);

/**
 * Build an index over `n` chunks given as parallel id and text arrays.
 */
enum BmStatus bm_index_build(const char *const *ids,
                             const char *const *texts,
                             size_t n,
                             double k1,
                             double b,
                             struct BmIndex **out);

/**
 * Build an index from a chunk file written by `bmembed ingest`.
 */
enum BmStatus bm_index_build_from_chunks(const char *chunks_path,
                                         double k1,
                                         double b,
                                         struct BmIndex **out);

/**
 * Load an index saved by `bmembed index`.
 */
enum BmStatus bm_index_load(const char *path, struct BmIndex **out);

void bm_index_free(struct BmIndex *index);

size_t bm_index_num_chunks(const struct BmIndex *index);

/**
 * Id of the chunk at `position`, owned by the index; null if out of range.
 */
const char *bm_index_chunk_id(const struct BmIndex *index, uint32_t position);

/**
 * Top hits for `query`, at most `capacity`, best first.
 */
enum BmStatus bm_index_search(const struct BmIndex *index,
                              const char *query,
                              struct BmHit *hits,
                              size_t capacity,
                              size_t *out_len);

/**
 * The offline hashed bag-of-tokens embedder.
 */
enum BmStatus bm_toy_embedder_new(size_t dim, uint64_t seed, struct BmEmbedder **out);

/**
 * Any provider, from the same spec strings the CLI accepts.
 */
enum BmStatus bm_embedder_from_spec(const char *spec, struct BmEmbedder **out);

void bm_embedder_free(struct BmEmbedder *embedder);

size_t bm_embedder_dim(const struct BmEmbedder *embedder);

/**
 * Base embedding of `text` into `out[0..dim]`. A text without tokens
 * yields the zero vector.
 */
enum BmStatus bm_embed(const struct BmEmbedder *embedder, const char *text, float *out, size_t dim);

/**
 * Identity adapter (W = 0) of dimension `dim`.
 */
enum BmStatus bm_adapter_zeros(size_t dim, struct BmAdapter **out);

/**
 * Load a checkpoint written by `bmembed train`.
 */
enum BmStatus bm_adapter_load(const char *path, struct BmAdapter **out);

void bm_adapter_free(struct BmAdapter *adapter);

size_t bm_adapter_dim(const struct BmAdapter *adapter);

/**
 * Unit-length adapted vector of `input[0..dim]` into `out[0..dim]`.
 */
enum BmStatus bm_adapter_apply(const struct BmAdapter *adapter,
                               const float *input,
                               float *out,
                               size_t dim);

/**
 * ListNet loss of similarities `sims[0..m]` against BM25 `scores[0..m]` at
 * temperature `alpha`. `grad`, when not null, receives dL/dsims.
 */
enum BmStatus bm_listnet_loss(const double *sims,
                              const double *scores,
                              size_t m,
                              double alpha,
                              double *loss,
                              double *grad);

/**
 * Reciprocal-rank fusion of `n` rankings of caller ids. Ranking `i` has
 * `lens[i]` ids at `rankings[i]`, best first. Writes at most `capacity`
 * fused entries and the total count to `out_len`; ties go to the smaller id.
 */
enum BmStatus bm_rrf(const uint64_t *const *rankings,
                     const size_t *lens,
                     size_t n,
                     double u,
                     struct BmFused *out,
                     size_t capacity,
                     size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BMEMBED_H */
