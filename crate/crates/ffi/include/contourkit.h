#ifndef CONTOURKIT_H
#define CONTOURKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/**
 * Result code of every fallible call.
 */
typedef enum CkStatus {
  CK_STATUS_OK = 0,
  CK_STATUS_NULL_POINTER = 1,
  CK_STATUS_INVALID_ARGUMENT = 2,
  CK_STATUS_IO = 3,
  CK_STATUS_CORRUPT_FILE = 4,
  CK_STATUS_DIMENSION_MISMATCH = 5,
  CK_STATUS_OUT_OF_RANGE = 6,
  CK_STATUS_BUFFER_TOO_SMALL = 7,
  CK_STATUS_INTERNAL = 8,
} CkStatus;

/**
 * Opaque binary mask handle.
 */
typedef struct CkMask CkMask;

/**
 * Opaque volume handle.
 */
typedef struct CkVolume CkVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ck_last_error(char *buf, size_t len);

/**
 * Loads a volume from its metadata file (with the `.raw` payload beside it).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CkStatus ck_volume_load(const char *path, struct CkVolume **out);

/**
 * Builds a volume from `dims[0] * dims[1] * dims[2]` densities in [0, 1],
 * x fastest.
 *
 * # Safety
 * `dims` and `spacing` must point to three values, `data` to the full grid.
 */
enum CkStatus ck_volume_from_densities(const size_t *dims,
                                       const double *spacing,
                                       const float *data,
                                       struct CkVolume **out);

/**
 * # Safety
 * `v` must be null or a handle from this library, not yet freed.
 */
void ck_volume_free(struct CkVolume *v);

/**
 * Writes the three grid dimensions to `out`.
 *
 * # Safety
 * `v` must be a live handle and `out` valid for three values.
 */
enum CkStatus ck_volume_dims(const struct CkVolume *v, size_t *out);

/**
 * Empty mask on the grid of `v`.
 *
 * # Safety
 * `v` must be a live handle; `out` must be writable.
 */
enum CkStatus ck_mask_new(const struct CkVolume *v, struct CkMask **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CkStatus ck_mask_load(const char *path, struct CkMask **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum CkStatus ck_mask_save(const struct CkMask *m, const char *path);

/**
 * # Safety
 * `m` must be null or a handle from this library, not yet freed.
 */
void ck_mask_free(struct CkMask *m);

/**
 * Number of set voxels, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t ck_mask_count(const struct CkMask *m);

/**
 * Paints (or erases) every voxel whose center lies within `radius_mm` of
 * `center` (millimeters, three values).
 *
 * # Safety
 * Handles must be live; `center` must point to three values.
 */
enum CkStatus ck_paint_sphere(struct CkMask *m,
                              const struct CkVolume *v,
                              const double *center,
                              double radius_mm,
                              bool erase);

/**
 * Paints (or erases) a disc on one slice; `center` is two in-plane millimeter
 * coordinates.
 *
 * # Safety
 * Handles must be live; `center` must point to two values.
 */
enum CkStatus ck_paint_disc(struct CkMask *m,
                            const struct CkVolume *v,
                            uint32_t axis,
                            size_t index,
                            const double *center,
                            double radius_mm,
                            bool erase);

/**
 * Applies one stroke given as JSON (the same form the session log uses).
 *
 * # Safety
 * Handles must be live; `json` must be a NUL-terminated string.
 */
enum CkStatus ck_apply_stroke_json(struct CkMask *m, const struct CkVolume *v, const char *json);

/**
 * Fills the slices between consecutive `keys` along `axis`.
 *
 * # Safety
 * Handles must be live; `keys` must point to `n_keys` values.
 */
enum CkStatus ck_interpolate(struct CkMask *m,
                             const struct CkVolume *v,
                             uint32_t axis,
                             const size_t *keys,
                             size_t n_keys);

/**
 * Dice similarity of two masks on the same grid.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum CkStatus ck_dsc(const struct CkMask *a, const struct CkMask *b, double *out);

/**
 * Renders `v` (optionally tinted by `labels`) from an orbit camera into
 * `rgba`, which must hold `width * height * 4` bytes. A null `tf_json`
 * selects the grayscale ramp.
 *
 * # Safety
 * `v` must be live, `labels` null or live, `tf_json` null or a
 * NUL-terminated string, and `rgba` valid for `rgba_len` bytes.
 */
enum CkStatus ck_render(const struct CkVolume *v,
                        const struct CkMask *labels,
                        const char *tf_json,
                        double azimuth_deg,
                        double elevation_deg,
                        size_t width,
                        size_t height,
                        uint8_t *rgba,
                        size_t rgba_len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ck_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTOURKIT_H */
