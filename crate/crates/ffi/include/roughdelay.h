#ifndef ROUGHDELAY_H
#define ROUGHDELAY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  RD_STATUS_OK = 0,
  RD_STATUS_NULL_POINTER = 1,
  RD_STATUS_INVALID_ARGUMENT = 2,
  RD_STATUS_CONFIG = 3,
  RD_STATUS_GRID = 4,
  RD_STATUS_NUMERICAL = 5,
  RD_STATUS_IO = 6,
  RD_STATUS_BUFFER_TOO_SMALL = 7,
  RD_STATUS_PANIC = 8,
} rd_status;

typedef enum {
  RD_CONVENTION_ITO = 0,
  RD_CONVENTION_STRATONOVICH = 1,
} rd_convention;

/**
 * Fine-grid Brownian sample.
 */
typedef struct rd_path rd_path;

/**
 * Delayed rough path.
 */
typedef struct rd_roughpath rd_roughpath;

/**
 * Delay system built from a TOML config.
 */
typedef struct rd_system rd_system;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rd_version(void);

/**
 * Samples a `dim`-dimensional Brownian path on `[t_start, t_end]`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
rd_status rd_path_sample_brownian(size_t dim,
                                  double t_start,
                                  double t_end,
                                  double fine_step,
                                  uint64_t seed,
                                  rd_path **out);

/**
 * Number of fine nodes of `path`, or 0 if `path` is null.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t rd_path_len(const rd_path *path);

/**
 * Copies the node values (node-major, `len × dim`) into `buf`.
 *
 * # Safety
 * `path` must be a live handle and `buf` must hold `cap` doubles.
 */
rd_status rd_path_values(const rd_path *path, double *buf, size_t cap);

/**
 * # Safety
 * `path` must be null or a handle not yet freed.
 */
void rd_path_free(rd_path *path);

/**
 * Lifts `path` to a delayed rough path on the coarse grid of step `step`.
 *
 * # Safety
 * `path` must be a live handle and `out` valid for one handle.
 */
rd_status rd_roughpath_lift(const rd_path *path,
                            double step,
                            double delay,
                            double gamma,
                            rd_convention convention,
                            rd_roughpath **out);

/**
 * Largest Chen residual over `n` node triples `(s, u, t)` stored flat in
 * `triples`.
 *
 * # Safety
 * `rp` must be a live handle, `triples` must hold `3 n` values and
 * `out` must be writable.
 */
rd_status rd_roughpath_chen_residual(const rd_roughpath *rp,
                                     const int64_t *triples,
                                     size_t n,
                                     double *out);

/**
 * Number of coarse intervals of `rp`, or 0 if `rp` is null.
 *
 * # Safety
 * `rp` must be null or a live handle.
 */
size_t rd_roughpath_intervals(const rd_roughpath *rp);

/**
 * # Safety
 * `rp` must be a live handle and `path` a NUL-terminated string.
 */
rd_status rd_roughpath_write(const rd_roughpath *rp, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one handle.
 */
rd_status rd_roughpath_read(const char *path, rd_roughpath **out);

/**
 * # Safety
 * `rp` must be null or a handle not yet freed.
 */
void rd_roughpath_free(rd_roughpath *rp);

/**
 * Builds a system from config text in the command-line TOML format.
 * `ROUGHDELAY_SEED` is not consulted.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid for one handle.
 */
rd_status rd_system_from_toml(const char *toml, rd_system **out);

/**
 * Top exponents for `seed`, with the config's `run` settings. Writes
 * `run.k` values into `buf`.
 *
 * # Safety
 * `sys` must be a live handle and `buf` must hold `cap` doubles.
 */
rd_status rd_system_lyapunov(const rd_system *sys, uint64_t seed, double *buf, size_t cap);

/**
 * Value at the end of `run.segments` segments from the constant initial
 * segment, for `seed`. Writes the state dimension's worth of values.
 *
 * # Safety
 * `sys` must be a live handle and `buf` must hold `cap` doubles.
 */
rd_status rd_system_solve_final(const rd_system *sys, uint64_t seed, double *buf, size_t cap);

/**
 * # Safety
 * `sys` must be null or a handle not yet freed.
 */
void rd_system_free(rd_system *sys);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUGHDELAY_H */
