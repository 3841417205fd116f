#ifndef DT6D_H
#define DT6D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum Dt6dStatus {
  DT6D_STATUS_OK = 0,
  DT6D_STATUS_NULL_POINTER = 1,
  DT6D_STATUS_INVALID_ARGUMENT = 2,
  DT6D_STATUS_IO = 3,
  DT6D_STATUS_FORMAT = 4,
  DT6D_STATUS_SHAPE = 5,
  DT6D_STATUS_TRACKING_LOST = 6,
  DT6D_STATUS_ARCHITECTURE_MISMATCH = 7,
  DT6D_STATUS_PANIC = 8,
} Dt6dStatus;

/**
 * Opaque tracker handle.
 */
typedef struct Dt6dTracker Dt6dTracker;

/**
 * Pinhole intrinsics in pixels.
 */
typedef struct Dt6dIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} Dt6dIntrinsics;

/**
 * Object-in-camera pose: row-major rotation and translation in meters.
 */
typedef struct Dt6dPose {
  double rotation[9];
  double translation[3];
} Dt6dPose;

/**
 * Per-phase wall time of the last step, milliseconds.
 */
typedef struct Dt6dTiming {
  double render_ms;
  double normalize_ms;
  double forward_ms;
  double update_ms;
} Dt6dTiming;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a tracker from a model file. `mesh_path` may be null for the
 * built-in toy object, or name an OBJ file. On success `*out` receives a
 * handle to release with [`dt6d_tracker_free`].
 *
 * # Safety
 * Pointers must be null or valid for the documented access.
 */
enum Dt6dStatus dt6d_tracker_new(const char *model_path,
                                 const char *mesh_path,
                                 const struct Dt6dIntrinsics *intrinsics,
                                 const struct Dt6dPose *initial,
                                 struct Dt6dTracker **out);

/**
 * Releases a tracker. Null is ignored.
 *
 * # Safety
 * `tracker` must come from [`dt6d_tracker_new`] and not be used afterwards.
 */
void dt6d_tracker_free(struct Dt6dTracker *tracker);

/**
 * One tracking step on a full camera frame: `rgb` holds `3·width·height`
 * interleaved values in `[0,1]`, `depth` holds `width·height` meters (0 =
 * no data). The new estimate is written to `out` (may be null). On failure
 * the estimate is unchanged.
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum Dt6dStatus dt6d_tracker_step(struct Dt6dTracker *tracker,
                                  const float *rgb,
                                  const float *depth,
                                  uint32_t width,
                                  uint32_t height,
                                  struct Dt6dPose *out);

/**
 * Replaces the pose estimate.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Dt6dStatus dt6d_tracker_reset(struct Dt6dTracker *tracker, const struct Dt6dPose *pose);

/**
 * Current pose estimate.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Dt6dStatus dt6d_tracker_pose(const struct Dt6dTracker *tracker, struct Dt6dPose *out);

/**
 * Phase timing of the last successful step; all zero before the first step
 * or after a reset.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Dt6dStatus dt6d_tracker_last_timing(const struct Dt6dTracker *tracker, struct Dt6dTiming *out);

/**
 * Renders the tracker's object at `pose` with the default lighting into
 * caller buffers sized for the tracker's camera (`3·w·h` and `w·h` values).
 *
 * # Safety
 * Buffers must hold `rgb_len` / `depth_len` values.
 */
enum Dt6dStatus dt6d_tracker_render(const struct Dt6dTracker *tracker,
                                    const struct Dt6dPose *pose,
                                    float *rgb,
                                    size_t rgb_len,
                                    float *depth,
                                    size_t depth_len);

/**
 * Message of the last failed call on this thread (empty if none). Valid
 * until the next failing call on the same thread.
 */
const char *dt6d_last_error_message(void);

/**
 * Library version, NUL-terminated.
 */
const char *dt6d_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DT6D_H */
