#ifndef TOPOMP_H
#define TOPOMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TopompStatus {
  TOPOMP_STATUS_OK = 0,
  TOPOMP_STATUS_NULL_POINTER = 1,
  TOPOMP_STATUS_INVALID_UTF8 = 2,
  /**
   * The input violates a format or domain invariant.
   */
  TOPOMP_STATUS_INVALID_DATA = 3,
  /**
   * A configuration or argument is malformed.
   */
  TOPOMP_STATUS_INVALID_ARGUMENT = 4,
  TOPOMP_STATUS_BUFFER_TOO_SMALL = 5,
  TOPOMP_STATUS_PANIC = 6,
} TopompStatus;

/**
 * A validated complex with the features read alongside it.
 */
typedef struct TopompComplex TopompComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *topomp_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next library call on this thread.
 */
const char *topomp_last_error_message(void);

/**
 * Parses a JSON complex document and stores a new handle in `*out`.
 *
 * # Safety
 * `json` is a nul-terminated string and `out` is writable.
 */
enum TopompStatus topomp_complex_from_json(const char *json, struct TopompComplex **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `c` is null or a handle not yet freed.
 */
void topomp_complex_free(struct TopompComplex *c);

/**
 * # Safety
 * `c` is a live handle and `out` is writable.
 */
enum TopompStatus topomp_complex_max_rank(const struct TopompComplex *c, size_t *out);

/**
 * Number of cells of `rank`; zero above the top rank.
 *
 * # Safety
 * `c` is a live handle and `out` is writable.
 */
enum TopompStatus topomp_complex_num_cells(const struct TopompComplex *c, size_t rank, size_t *out);

/**
 * Writes the Betti numbers into `out[..cap]` and their count into `*len`.
 * Returns `BufferTooSmall` (with `*len` set) when `cap` is too small.
 *
 * # Safety
 * `c` is a live handle, `len` is writable and `out` has room for `cap`
 * values.
 */
enum TopompStatus topomp_complex_betti(const struct TopompComplex *c,
                                       size_t *out,
                                       size_t cap,
                                       size_t *len);

/**
 * Canonical JSON for the complex and its features.
 *
 * # Safety
 * `c` is a live handle and `out` is writable.
 */
enum TopompStatus topomp_complex_to_json(const struct TopompComplex *c, char **out);

/**
 * Shape of a named neighborhood matrix (`B1`, `Lup0`, `hodge:1`, ...).
 *
 * # Safety
 * `c` is a live handle, `name` is a nul-terminated string, `rows` and
 * `cols` are writable.
 */
enum TopompStatus topomp_matrix_shape(const struct TopompComplex *c,
                                      const char *name,
                                      size_t *rows,
                                      size_t *cols);

/**
 * Writes a named neighborhood matrix densely in row-major order.
 *
 * # Safety
 * `c` is a live handle, `name` is a nul-terminated string and `out` has
 * room for `cap` values.
 */
enum TopompStatus topomp_matrix_dense(const struct TopompComplex *c,
                                      const char *name,
                                      double *out,
                                      size_t cap);

/**
 * Initializes the model described by `model_json` with `seed`, runs it
 * on the complex's features and returns the output document, the same
 * bytes `topomp forward` writes.
 *
 * # Safety
 * `model_json` is a nul-terminated string, `c` is a live handle and `out`
 * is writable.
 */
enum TopompStatus topomp_forward(const char *model_json,
                                 const struct TopompComplex *c,
                                 uint64_t seed,
                                 char **out);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string from this library not yet freed.
 */
void topomp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOMP_H */
