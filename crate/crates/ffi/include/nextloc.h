#ifndef NEXTLOC_H
#define NEXTLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Stratum selector for [`nl_evaluate`].
 */
#define NL_SCOPE_ALL 0

#define NL_SCOPE_T1 1

#define NL_SCOPE_T2 2

typedef enum NlStatus {
  NL_STATUS_OK = 0,
  NL_STATUS_NULL_ARGUMENT = 1,
  NL_STATUS_INVALID_ARGUMENT = 2,
  NL_STATUS_IO = 3,
  NL_STATUS_FORMAT = 4,
  NL_STATUS_COMPATIBILITY = 5,
  NL_STATUS_OUT_OF_RANGE = 6,
  NL_STATUS_EMPTY_INPUT = 7,
  NL_STATUS_INTERNAL = 99,
} NlStatus;

/**
 * Opaque dataset handle.
 */
typedef struct NlDataset NlDataset;

/**
 * Opaque model handle.
 */
typedef struct NlModel NlModel;

/**
 * Micro-averaged metrics at one cutoff.
 */
typedef struct NlMetrics {
  double recall;
  double mrr;
  double ndcg;
  size_t count;
} NlMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *nl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nl_version(void);

/**
 * Opens a dataset directory.
 */
enum NlStatus nl_dataset_open(const char *dir, struct NlDataset **out);

void nl_dataset_free(struct NlDataset *ds);

/**
 * Number of users, or 0 for a null handle.
 */
size_t nl_dataset_n_users(const struct NlDataset *ds);

/**
 * Number of locations, or 0 for a null handle.
 */
size_t nl_dataset_n_locations(const struct NlDataset *ds);

/**
 * Loads a checkpoint directory.
 */
enum NlStatus nl_model_load(const char *dir, struct NlModel **out);

void nl_model_free(struct NlModel *m);

/**
 * Size of the logit vector, or 0 for a null handle.
 */
size_t nl_model_n_locations(const struct NlModel *m);

/**
 * Next-location logits for one history of `len` (location, hour) pairs.
 * `out_logits` must hold `out_len >= nl_model_n_locations(model)` floats.
 */
enum NlStatus nl_model_predict(const struct NlModel *model,
                               uint32_t user,
                               const uint32_t *locations,
                               const uint8_t *hours,
                               size_t len,
                               float *out_logits,
                               size_t out_len);

/**
 * Scores `model` on the test split of `ds` at cutoff `k`, with strata tagged
 * against `threshold`. `scope` is one of `NL_SCOPE_ALL`, `NL_SCOPE_T1`,
 * `NL_SCOPE_T2`; a scope without samples reports `count = 0`.
 */
enum NlStatus nl_evaluate(const struct NlModel *model,
                          const struct NlDataset *ds,
                          uint32_t threshold,
                          size_t k,
                          int32_t scope,
                          struct NlMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEXTLOC_H */
