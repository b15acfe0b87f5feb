#ifndef MODALIGN_H
#define MODALIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MalnStatus {
  MALN_STATUS_OK = 0,
  MALN_STATUS_NULL_POINTER = 1,
  MALN_STATUS_INVALID_UTF8 = 2,
  MALN_STATUS_IO = 3,
  MALN_STATUS_PARSE = 4,
  MALN_STATUS_INVALID_ARGUMENT = 5,
  MALN_STATUS_SHAPE_MISMATCH = 6,
  MALN_STATUS_DEGENERATE_VECTOR = 7,
  MALN_STATUS_CHECKPOINT = 8,
  MALN_STATUS_EMPTY_GALLERY = 9,
  MALN_STATUS_BUFFER_TOO_SMALL = 10,
  MALN_STATUS_PANIC = 11,
  MALN_STATUS_INTERNAL = 12,
} MalnStatus;

/**
 * Modality codes, matching the record file format.
 */
typedef enum MalnModality {
  MALN_MODALITY_SKETCH = 0,
  MALN_MODALITY_PHOTO = 1,
  MALN_MODALITY_TEXT = 2,
} MalnModality;

typedef enum MalnVariant {
  MALN_VARIANT_CLIP = 0,
  MALN_VARIANT_ORIGINAL = 1,
  MALN_VARIANT_CONVERTED = 2,
} MalnVariant;

/**
 * Opaque record collection.
 */
typedef struct MalnDataset MalnDataset;

/**
 * Opaque trained model.
 */
typedef struct MalnModel MalnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *maln_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *maln_version(void);

/**
 * Loads a checkpoint into `*out`.
 */
enum MalnStatus maln_model_load(const char *path, struct MalnModel **out);

void maln_model_free(struct MalnModel *model);

/**
 * Embedding dimension, or 0 for a null handle.
 */
size_t maln_model_dim(const struct MalnModel *model);

/**
 * Encoder input dimension for `m`, or 0 for a null handle.
 */
size_t maln_model_input_dim(const struct MalnModel *model, enum MalnModality m);

/**
 * Raw embedding `z` of one feature vector; writes `dim` values.
 */
enum MalnStatus maln_embed(const struct MalnModel *model,
                           enum MalnModality m,
                           const double *features,
                           size_t len,
                           double *out,
                           size_t out_len);

/**
 * `z − m_src + m_trg`.
 */
enum MalnStatus maln_convert(const struct MalnModel *model,
                             enum MalnModality src,
                             enum MalnModality trg,
                             const double *z,
                             size_t len,
                             double *out,
                             size_t out_len);

/**
 * Unit semantic vector `N(z − m)`.
 */
enum MalnStatus maln_semantic(const struct MalnModel *model,
                              enum MalnModality m,
                              const double *z,
                              size_t len,
                              double *out,
                              size_t out_len);

/**
 * Copies the learned encoding `m` of a modality.
 */
enum MalnStatus maln_modality_encoding(const struct MalnModel *model,
                                       enum MalnModality m,
                                       double *out,
                                       size_t out_len);

/**
 * Loads a `#MAEB v1` record file into `*out`.
 */
enum MalnStatus maln_dataset_load(const char *path, struct MalnDataset **out);

void maln_dataset_free(struct MalnDataset *dataset);

/**
 * Record count, or 0 for a null handle.
 */
size_t maln_dataset_len(const struct MalnDataset *dataset);

/**
 * Feature dimension, or 0 for a null handle.
 */
size_t maln_dataset_dim(const struct MalnDataset *dataset);

/**
 * Ranks every record of `gallery` (all photos) for one sketch feature
 * vector. Writes gallery record positions, best first; ties go to the
 * smaller record id.
 */
enum MalnStatus maln_rank(const struct MalnModel *model,
                          const struct MalnDataset *gallery,
                          const double *sketch,
                          size_t len,
                          enum MalnVariant variant,
                          size_t *out,
                          size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODALIGN_H */
