#ifndef GAUSSVOL_H
#define GAUSSVOL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum GvStatus {
  GV_STATUS_OK = 0,
  GV_STATUS_NULL_ARGUMENT = 1,
  GV_STATUS_INVALID_ARGUMENT = 2,
  GV_STATUS_IO = 3,
  GV_STATUS_FORMAT = 4,
  GV_STATUS_CONFIG = 5,
  GV_STATUS_RENDER = 6,
  GV_STATUS_NUMERIC = 7,
  GV_STATUS_EMPTY_GEOMETRY = 8,
  GV_STATUS_PANIC = 9,
} GvStatus;

// Opaque distance field.
typedef struct GvGdf GvGdf;

// Opaque Gaussian volume.
typedef struct GvVolume GvVolume;

// Pinhole camera: world-to-camera rotation (row-major) and translation.
// The camera looks down `+z` with `y` pointing down the image.
typedef struct GvCamera {
  uint32_t width;
  uint32_t height;
  double fx;
  double fy;
  double cx;
  double cy;
  double rotation[9];
  double translation[3];
} GvCamera;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *gv_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *gv_version(void);

// Fresh volume at resolution `n` over `bounds` (`min.xyz`, `max.xyz`) with
// the fitting initialization. `bounds` may be null for the unit cube.
enum GvStatus gv_volume_init(uint32_t n, const double *bounds, struct GvVolume **out);

enum GvStatus gv_volume_load(const char *path, struct GvVolume **out);

enum GvStatus gv_volume_save(const struct GvVolume *volume, const char *path);

// Releases a volume; null is ignored.
void gv_volume_free(struct GvVolume *volume);

enum GvStatus gv_volume_resolution(const struct GvVolume *volume, uint32_t *out);

enum GvStatus gv_volume_active_count(const struct GvVolume *volume, size_t *out);

// Camera at `eye` looking at `target`; `up` picks the image's upward
// direction. `fov_x` is the horizontal field of view in radians.
enum GvStatus gv_camera_look_at(const double *eye,
                                const double *target,
                                const double *up,
                                uint32_t width,
                                uint32_t height,
                                double fov_x,
                                struct GvCamera *out);

// Renders into `rgb`, which must hold `width * height * 3` floats in
// row-major interleaved order (linear color). `background` may be null for
// white.
enum GvStatus gv_volume_render(const struct GvVolume *volume,
                               const struct GvCamera *camera,
                               const double *background,
                               float *rgb,
                               size_t rgb_len);

// Fits a volume to the dataset at `dataset` (directory or transforms.json).
// `config` is a TOML file path or null for defaults.
enum GvStatus gv_fit(const char *dataset, const char *config, struct GvVolume **out);

enum GvStatus gv_volume_export_ply(const struct GvVolume *volume,
                                   const char *path,
                                   double opacity_floor);

enum GvStatus gv_gdf_extract(const struct GvVolume *volume,
                             double opacity_floor,
                             struct GvGdf **out);

// Number of lattice values in a distance field.
enum GvStatus gv_gdf_len(const struct GvGdf *gdf, size_t *out);

// Copies the distance values (lattice order, `z` fastest) into `values`.
enum GvStatus gv_gdf_values(const struct GvGdf *gdf, double *values, size_t len);

enum GvStatus gv_gdf_save(const struct GvGdf *gdf, const char *path);

// Releases a distance field; null is ignored.
void gv_gdf_free(struct GvGdf *gdf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAUSSVOL_H */
