#ifndef SLICEREG_H
#define SLICEREG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_INPUT = 2,
  SR_STATUS_DIMENSION_MISMATCH = 3,
  SR_STATUS_PARAMETER_BINDING = 4,
  SR_STATUS_IO = 5,
  SR_STATUS_FORMAT = 6,
  SR_STATUS_DIVERGED = 7,
  SR_STATUS_DEGENERATE = 8,
  SR_STATUS_UNDEFINED = 9,
  SR_STATUS_PANIC = 10,
} SrStatus;

/**
 * Pipeline configuration.
 */
typedef struct SrConfig SrConfig;

/**
 * Photo masks with their slice indices.
 */
typedef struct SrStack SrStack;

/**
 * Registration result for a whole stack.
 */
typedef struct SrTransform SrTransform;

/**
 * Binary CT segmentation.
 */
typedef struct SrVolume SrVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sr_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SrStatus sr_volume_read(const char *path, struct SrVolume **out);

/**
 * Builds a volume from `dims[0]*dims[1]*dims[2]` bytes, x fastest; any
 * nonzero byte is inside.
 *
 * # Safety
 * `dims` must point to 3 values and `data` to the full voxel count.
 */
enum SrStatus sr_volume_from_data(const size_t *dims,
                                  double voxel_size,
                                  const uint8_t *data,
                                  struct SrVolume **out);

/**
 * # Safety
 * `vol` must come from this library or be NULL.
 */
void sr_volume_free(struct SrVolume *vol);

/**
 * Reads every image in a directory as one photo mask.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
enum SrStatus sr_stack_read_dir(const char *dir, struct SrStack **out);

/**
 * Builds a stack of `count` masks of `width*height` bytes each, row-major,
 * laid out one after another. `indices` may be NULL for 0..count.
 *
 * # Safety
 * `data` must hold `count*width*height` bytes and `indices`, when given,
 * `count` values.
 */
enum SrStatus sr_stack_from_data(size_t width,
                                 size_t height,
                                 size_t count,
                                 const uint8_t *data,
                                 const int64_t *indices,
                                 struct SrStack **out);

/**
 * Number of slices, or 0 for NULL.
 *
 * # Safety
 * `stack` must come from this library or be NULL.
 */
size_t sr_stack_len(const struct SrStack *stack);

/**
 * # Safety
 * `stack` must come from this library or be NULL.
 */
void sr_stack_free(struct SrStack *stack);

/**
 * # Safety
 * `out` must be writable.
 */
enum SrStatus sr_config_default(struct SrConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SrStatus sr_config_read(const char *path, struct SrConfig **out);

/**
 * Pixel stride used by both joint and per-slice optimization.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum SrStatus sr_config_set_stride(struct SrConfig *cfg, size_t stride);

/**
 * # Safety
 * `cfg` must come from this library or be NULL.
 */
void sr_config_free(struct SrConfig *cfg);

/**
 * Profile initialization followed by joint optimization. `cfg` may be NULL
 * for the defaults.
 *
 * # Safety
 * Handles must come from this library and `out` must be writable.
 */
enum SrStatus sr_register(const struct SrStack *stack,
                          const struct SrVolume *ct,
                          const struct SrConfig *cfg,
                          struct SrTransform **out);

/**
 * Reads the first transform of a θ JSON document.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SrStatus sr_transform_read(const char *path, struct SrTransform **out);

/**
 * # Safety
 * `t` must come from this library and `path` be a NUL-terminated string.
 */
enum SrStatus sr_transform_write(const struct SrTransform *t, const char *path);

/**
 * Writes rotation x, y, z (radians), scaling, spacing and z offset.
 *
 * # Safety
 * `t` must come from this library and `out` hold 6 values.
 */
enum SrStatus sr_transform_params(const struct SrTransform *t, double *out);

/**
 * Number of per-slice offsets, or 0 for NULL.
 *
 * # Safety
 * `t` must come from this library or be NULL.
 */
size_t sr_transform_slice_count(const struct SrTransform *t);

/**
 * Slice index and in-plane offset of slice ordinal `k`.
 *
 * # Safety
 * `t` must come from this library; the output pointers must be writable.
 */
enum SrStatus sr_transform_slice_offset(const struct SrTransform *t,
                                        size_t k,
                                        int64_t *index,
                                        double *offset_x,
                                        double *offset_y);

/**
 * # Safety
 * `t` must come from this library or be NULL.
 */
void sr_transform_free(struct SrTransform *t);

/**
 * Mean squared mask disagreement over every `stride`-th photo pixel.
 *
 * # Safety
 * Handles must come from this library and `out` must be writable.
 */
enum SrStatus sr_cost(const struct SrStack *stack,
                      const struct SrVolume *ct,
                      const struct SrTransform *t,
                      size_t stride,
                      double *out);

/**
 * Runs the neighbour-hull test for a joint transform. `flagged` receives
 * the number of intersecting slices and `classification` 0 (none),
 * 1 (at most three, adjacent) or 2 (anything else).
 *
 * # Safety
 * Handles must come from this library and outputs must be writable.
 */
enum SrStatus sr_intersect(const struct SrStack *stack,
                           const struct SrTransform *t,
                           size_t *flagged,
                           int32_t *classification);

/**
 * Library version as a static string.
 */
const char *sr_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLICEREG_H */
