#ifndef MESHPART_H
#define MESHPART_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpgStatus {
  MPG_OK = 0,
  MPG_NULL_POINTER = 1,
  MPG_INVALID_ARGUMENT = 2,
  MPG_PARSE_ERROR = 3,
  MPG_DATA_ERROR = 4,
  MPG_NUMERIC_ERROR = 5,
  MPG_CHECKPOINT_ERROR = 6,
  MPG_IO_ERROR = 7,
  MPG_PANIC = 8,
} MpgStatus;

/**
 * Trained model handle.
 */
typedef struct MpgCheckpoint MpgCheckpoint;

/**
 * Triangle mesh handle.
 */
typedef struct MpgMesh MpgMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *mpg_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MpgStatus mpg_mesh_load_obj(const char *path, struct MpgMesh **out);

/**
 * Builds a mesh from `vertex_count` xyz triples and `face_count` index triples.
 *
 * # Safety
 * `vertices` must hold `3 * vertex_count` doubles and `faces`
 * `3 * face_count` indices; `out` must be writable.
 */
enum MpgStatus mpg_mesh_from_arrays(const double *vertices,
                                    size_t vertex_count,
                                    const uint32_t *faces,
                                    size_t face_count,
                                    struct MpgMesh **out);

/**
 * Number of vertices; 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t mpg_mesh_vertex_count(const struct MpgMesh *mesh);

/**
 * Number of triangles; 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t mpg_mesh_face_count(const struct MpgMesh *mesh);

/**
 * Copies xyz positions into `out`, which must hold `len >= 3 * vertex_count` doubles.
 *
 * # Safety
 * `mesh` must be a live handle and `out` writable for `len` doubles.
 */
enum MpgStatus mpg_mesh_copy_vertices(const struct MpgMesh *mesh, double *out, size_t len);

/**
 * # Safety
 * `mesh` must be a live handle and `path` a NUL-terminated string.
 */
enum MpgStatus mpg_mesh_write_obj(const struct MpgMesh *mesh, const char *path);

/**
 * # Safety
 * `mesh` must be null or a handle not yet freed.
 */
void mpg_mesh_free(struct MpgMesh *mesh);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MpgStatus mpg_checkpoint_load(const char *path, struct MpgCheckpoint **out);

/**
 * # Safety
 * `ckpt` must be null or a handle not yet freed.
 */
void mpg_checkpoint_free(struct MpgCheckpoint *ckpt);

/**
 * Number of parts; 0 for a null handle.
 *
 * # Safety
 * `ckpt` must be null or a live handle.
 */
size_t mpg_checkpoint_parts(const struct MpgCheckpoint *ckpt);

/**
 * Latent length; 0 for a null handle.
 *
 * # Safety
 * `ckpt` must be null or a live handle.
 */
size_t mpg_checkpoint_latent(const struct MpgCheckpoint *ckpt);

/**
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum MpgStatus mpg_reconstruct(const struct MpgCheckpoint *ckpt,
                               const struct MpgMesh *mesh,
                               struct MpgMesh **out);

/**
 * Source with part `part` blended `alpha` of the way to the target.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum MpgStatus mpg_interpolate_part(const struct MpgCheckpoint *ckpt,
                                    const struct MpgMesh *source,
                                    const struct MpgMesh *target,
                                    size_t part,
                                    double alpha,
                                    struct MpgMesh **out);

/**
 * Parts listed in `parts` (length `count`) come from the target.
 *
 * # Safety
 * Handles must be live; `parts` must hold `count` values; `out` writable.
 */
enum MpgStatus mpg_swap_parts(const struct MpgCheckpoint *ckpt,
                              const struct MpgMesh *source,
                              const struct MpgMesh *target,
                              const size_t *parts,
                              size_t count,
                              struct MpgMesh **out);

/**
 * Writes the latent vector into `out`, which must hold `len >= latent` doubles.
 *
 * # Safety
 * Handles must be live; `out` writable for `len` doubles.
 */
enum MpgStatus mpg_encode(const struct MpgCheckpoint *ckpt,
                          const struct MpgMesh *mesh,
                          double *out,
                          size_t len);

/**
 * Largest corresponding-vertex distance between two registered meshes.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum MpgStatus mpg_hausdorff(const struct MpgMesh *a, const struct MpgMesh *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHPART_H */
