#ifndef MUSICAL_MOMENTS_H
#define MUSICAL_MOMENTS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmStatus {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_ARGUMENT = 1,
  MM_STATUS_INVALID_ARGUMENT = 2,
  MM_STATUS_IO = 3,
  MM_STATUS_DATASET_FORMAT = 4,
  MM_STATUS_MODEL_FORMAT = 5,
  MM_STATUS_VOCABULARY_MISMATCH = 6,
  MM_STATUS_INTERNAL = 7,
  MM_STATUS_PANIC = 8,
} MmStatus;

/**
 * Loaded model, dataset and library. Immutable; safe to share between
 * threads.
 */
typedef struct MmRecommender MmRecommender;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string. Do not free.
 */
const char *mm_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread. Do not free.
 */
const char *mm_last_error(void);

/**
 * Loads a model file, a dataset directory and a library (a file or a
 * directory; NULL means the dataset directory).
 *
 * # Safety
 * Path arguments must be NULL or valid NUL-terminated strings; `out` must
 * be a valid pointer to writable storage for one handle.
 */
enum MmStatus mm_recommender_load(const char *model_path,
                                  const char *dataset_dir,
                                  const char *library_path,
                                  struct MmRecommender **out);

/**
 * # Safety
 * `h` must be NULL or a handle from [`mm_recommender_load`] not yet freed.
 */
void mm_recommender_free(struct MmRecommender *h);

/**
 * Runs all four phases and writes the result as JSON (the same document
 * the HTTP API returns) to `*out_json`.
 *
 * # Safety
 * `h` must be a live handle; `out_json` must be a valid pointer.
 */
enum MmStatus mm_recommend_json(const struct MmRecommender *h,
                                int32_t hour,
                                uint32_t k,
                                double epsilon,
                                char **out_json);

/**
 * Writes the hour's tag profile as JSON to `*out_json`.
 *
 * # Safety
 * `h` must be a live handle; `out_json` must be a valid pointer.
 */
enum MmStatus mm_profile_json(const struct MmRecommender *h, int32_t hour, char **out_json);

/**
 * Predicted target feature for an hour.
 *
 * # Safety
 * `h` must be a live handle; `out` must be a valid pointer.
 */
enum MmStatus mm_predict(const struct MmRecommender *h, int32_t hour, double *out);

/**
 * Number of moments in the loaded dataset.
 *
 * # Safety
 * `h` must be a live handle; `out` must be a valid pointer.
 */
enum MmStatus mm_dataset_len(const struct MmRecommender *h, size_t *out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void mm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUSICAL_MOMENTS_H */
