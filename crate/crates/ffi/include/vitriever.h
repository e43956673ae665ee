#ifndef VITRIEVER_H
#define VITRIEVER_H

/* Generated by cbindgen from crates/ffi/src. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum VitStatus {
  VIT_STATUS_OK = 0,
  VIT_STATUS_NULL_POINTER = 1,
  VIT_STATUS_INVALID_ARGUMENT = 2,
  VIT_STATUS_IO = 3,
  VIT_STATUS_FORMAT = 4,
  VIT_STATUS_DIMENSION_MISMATCH = 5,
  VIT_STATUS_METRIC = 6,
  VIT_STATUS_NORMALIZATION = 7,
  VIT_STATUS_EVAL = 8,
  VIT_STATUS_DATASET = 9,
  VIT_STATUS_PANIC = 10,
} VitStatus;

/*
 Distance functions, in result-table column order.
 */
typedef enum VitMetric {
  VIT_METRIC_MANHATTAN = 0,
  VIT_METRIC_EUCLIDEAN = 1,
  VIT_METRIC_COSINE = 2,
  VIT_METRIC_BRAY_CURTIS = 3,
  VIT_METRIC_CANBERRA = 4,
  VIT_METRIC_CHEBYSHEV = 5,
  VIT_METRIC_CORRELATION = 6,
} VitMetric;

typedef enum VitScheme {
  VIT_SCHEME_L1_AXIS1 = 0,
  VIT_SCHEME_L2_AXIS1 = 1,
  VIT_SCHEME_L1_AXIS0 = 2,
  VIT_SCHEME_L2_AXIS0 = 3,
  VIT_SCHEME_ROBUST = 4,
  VIT_SCHEME_NONE = 5,
} VitScheme;

typedef enum VitLayout {
  VIT_LAYOUT_OXFORD = 0,
  VIT_LAYOUT_PARIS = 1,
  VIT_LAYOUT_HOLIDAYS = 2,
  VIT_LAYOUT_UKBENCH = 3,
  VIT_LAYOUT_JSON = 4,
} VitLayout;

/*
 Fitted normalization state.
 */
typedef struct VitNormalizer VitNormalizer;

/*
 Rankings for a batch of queries.
 */
typedef struct VitResults VitResults;

/*
 Descriptor set with row ids.
 */
typedef struct VitStore VitStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or NULL.
 */
const char *vit_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *vit_version(void);

/*
 Opens a binary descriptor store.
 */
enum VitStatus vit_store_open(const char *path, struct VitStore **out);

/*
 Builds a store from `count × dim` row-major values and `count` ids.
 */
enum VitStatus vit_store_new(const float *values,
                             size_t count,
                             size_t dim,
                             const char *const *ids,
                             struct VitStore **out);

/*
 Writes a store in the binary format.
 */
enum VitStatus vit_store_write(const struct VitStore *store, const char *path);

size_t vit_store_count(const struct VitStore *store);

size_t vit_store_dim(const struct VitStore *store);

/*
 Borrowed pointer to row `row` (`dim` values), or NULL if out of range.
 */
const float *vit_store_row(const struct VitStore *store, size_t row);

/*
 Copies the id of `row` into `buf` (NUL-terminated, truncated to
 `buf_len`). Returns the full id length in bytes through `len_out`.
 */
enum VitStatus vit_store_id(const struct VitStore *store,
                            size_t row,
                            char *buf,
                            size_t buf_len,
                            size_t *len_out);

void vit_store_free(struct VitStore *store);

/*
 Distance between two `len`-element vectors.
 */
enum VitStatus vit_distance(enum VitMetric metric,
                            const float *p,
                            const float *q,
                            size_t len,
                            double *out);

/*
 Distances from `query` (`dim` values) to every row of `index`, written to
 `out` which must hold `vit_store_count(index)` values. Undefined
 distances are `+inf` and counted in `warnings_out` (may be NULL).
 */
enum VitStatus vit_distance_batch(enum VitMetric metric,
                                  const float *query,
                                  size_t dim,
                                  const struct VitStore *index,
                                  double *out,
                                  size_t *warnings_out);

/*
 Fits a normalizer on `reference`. Quantiles apply to ROBUST only.
 */
enum VitStatus vit_normalizer_fit(enum VitScheme scheme,
                                  double q_low,
                                  double q_high,
                                  const struct VitStore *reference,
                                  struct VitNormalizer **out);

/*
 Applies a normalizer, producing a new store with the same ids.
 */
enum VitStatus vit_normalizer_apply(const struct VitNormalizer *normalizer,
                                    const struct VitStore *input,
                                    struct VitStore **out,
                                    size_t *degenerate_out);

enum VitStatus vit_normalizer_save(const struct VitNormalizer *normalizer, const char *path);

enum VitStatus vit_normalizer_load(const char *path, struct VitNormalizer **out);

void vit_normalizer_free(struct VitNormalizer *normalizer);

/*
 Ranks `index` for every row of `queries`. `k == 0` requests full
 rankings. With `exclude_self`, each query's own id is skipped.
 */
enum VitStatus vit_search(const struct VitStore *queries,
                          const struct VitStore *index,
                          enum VitMetric metric,
                          size_t k,
                          bool exclude_self,
                          struct VitResults **out);

/*
 Number of rankings (one per query).
 */
size_t vit_results_count(const struct VitResults *results);

/*
 Length of ranking `query`, or 0 if out of range.
 */
size_t vit_results_len(const struct VitResults *results, size_t query);

/*
 Index row and distance of entry `rank` (0-based) of ranking `query`.
 */
enum VitStatus vit_results_entry(const struct VitResults *results,
                                 size_t query,
                                 size_t rank,
                                 size_t *row_out,
                                 double *distance_out);

void vit_results_free(struct VitResults *results);

/*
 Loads stores and ground truth, evaluates one configuration and writes the
 aggregate score (mAP on 0–100, or mean N-S) to `aggregate_out`.
 `queries_path` and `gt_path` may be NULL; `k == 0` uses the protocol
 default depth.
 */
enum VitStatus vit_evaluate(const char *index_path,
                            const char *queries_path,
                            enum VitLayout layout,
                            const char *gt_path,
                            enum VitMetric metric,
                            enum VitScheme scheme,
                            double q_low,
                            double q_high,
                            size_t k,
                            double *aggregate_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VITRIEVER_H */
