#ifndef MDIMLAB_H
#define MDIMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MdimStatus {
  MDIM_STATUS_OK = 0,
  MDIM_STATUS_NULL_POINTER = 1,
  MDIM_STATUS_INVALID_PARAMS = 2,
  MDIM_STATUS_DIMENSION = 3,
  MDIM_STATUS_DOMAIN = 4,
  MDIM_STATUS_ESCAPED = 5,
  MDIM_STATUS_INFEASIBLE = 6,
  MDIM_STATUS_SCHEDULE = 7,
  MDIM_STATUS_FORMAT = 8,
  MDIM_STATUS_UTF8 = 9,
  MDIM_STATUS_PANIC = 10,
} MdimStatus;

/**
 * A pseudo-horseshoe or chained horseshoe.
 */
typedef struct MdimHorseshoe MdimHorseshoe;

/**
 * A dynamical system.
 */
typedef struct MdimSystem MdimSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *mdim_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *mdim_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void mdim_string_free(char *s);

/**
 * Doubling map `x -> 2x mod 1` on the `n`-torus.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MdimStatus mdim_system_doubling(size_t n, struct MdimSystem **out);

/**
 * Arnold cat map on the 2-torus.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MdimStatus mdim_system_cat_map(struct MdimSystem **out);

/**
 * Identity on the `n`-torus.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MdimStatus mdim_system_identity_torus(size_t n, struct MdimSystem **out);

/**
 * Rotation of the `n`-torus by `angles[0..n]`.
 *
 * # Safety
 * `angles` must point to `n` doubles; `out` must be a valid pointer.
 */
enum MdimStatus mdim_system_rotation(const double *angles, size_t n, struct MdimSystem **out);

/**
 * Releases a system. Null is ignored.
 *
 * # Safety
 * `sys` must come from this library and not be freed twice.
 */
void mdim_system_free(struct MdimSystem *sys);

/**
 * Ambient dimension of a system, 0 for null.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
size_t mdim_system_dim(const struct MdimSystem *sys);

/**
 * One application of the map: `y = f(x)`, both of length `dim`.
 *
 * # Safety
 * `x` and `y` must point to `dim` doubles.
 */
enum MdimStatus mdim_system_apply(const struct MdimSystem *sys,
                                  const double *x,
                                  double *y,
                                  size_t dim);

/**
 * Dynamical distance `d_k(x, y)`: the largest distance along the first `k`
 * iterates.
 *
 * # Safety
 * `x` and `y` must point to `dim` doubles; `out` must be valid.
 */
enum MdimStatus mdim_dyn_distance(const struct MdimSystem *sys,
                                  size_t k,
                                  const double *x,
                                  const double *y,
                                  size_t dim,
                                  double *out);

/**
 * Size of a greedy maximal `(m, eps)`-separated subset of the `res^dim`
 * lattice cloud.
 *
 * # Safety
 * `out` must be valid.
 */
enum MdimStatus mdim_separated_count_lattice(const struct MdimSystem *sys,
                                             size_t res,
                                             size_t m,
                                             double eps,
                                             uint64_t *out);

/**
 * Size of a greedy maximal `(m, eps)`-separated subset of `count` points
 * stored row-major with `dim` coordinates each.
 *
 * # Safety
 * `points` must point to `count * dim` doubles; `out` must be valid.
 */
enum MdimStatus mdim_separated_count_points(const struct MdimSystem *sys,
                                            const double *points,
                                            size_t count,
                                            size_t dim,
                                            size_t m,
                                            double eps,
                                            uint64_t *out);

/**
 * Builds a pseudo-horseshoe (`period <= 1`) or a chained horseshoe with
 * chart bound `c_bound` and chart seed `seed`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MdimStatus mdim_horseshoe_build(size_t n,
                                     double delta,
                                     size_t k,
                                     size_t period,
                                     double c_bound,
                                     uint64_t seed,
                                     struct MdimHorseshoe **out);

/**
 * Parses a horseshoe JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be valid.
 */
enum MdimStatus mdim_horseshoe_from_json(const char *json, struct MdimHorseshoe **out);

/**
 * Serializes a horseshoe; free the result with [`mdim_string_free`].
 *
 * # Safety
 * `h` must be a live handle; `out` must be valid.
 */
enum MdimStatus mdim_horseshoe_to_json(const struct MdimHorseshoe *h, char **out);

/**
 * Number of rectangles `N_k`, 0 for null.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t mdim_horseshoe_n_symbols(const struct MdimHorseshoe *h);

/**
 * Number of stages: 1 for a pseudo-horseshoe, the period for a chained one.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t mdim_horseshoe_n_stages(const struct MdimHorseshoe *h);

/**
 * New system handle evaluating the horseshoe map; free it separately.
 *
 * # Safety
 * `h` must be a live handle; `out` must be valid.
 */
enum MdimStatus mdim_horseshoe_system(const struct MdimHorseshoe *h, struct MdimSystem **out);

/**
 * Checks every Markov piece exactly and, when `resolution > 0`, on a
 * sample lattice. Writes the number of failing pieces to `failures`.
 *
 * # Safety
 * `h` must be a live handle; `failures` must be valid.
 */
enum MdimStatus mdim_horseshoe_verify(const struct MdimHorseshoe *h,
                                      size_t resolution,
                                      uint64_t *failures);

/**
 * Releases a horseshoe. Null is ignored.
 *
 * # Safety
 * `h` must come from this library and not be freed twice.
 */
void mdim_horseshoe_free(struct MdimHorseshoe *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDIMLAB_H */
