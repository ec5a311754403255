#ifndef CONVSIM_H
#define CONVSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConvsimStatus {
  CONVSIM_STATUS_OK = 0,
  CONVSIM_STATUS_NULL_POINTER = 1,
  CONVSIM_STATUS_INVALID_ARGUMENT = 2,
  CONVSIM_STATUS_INVALID_CONFIG = 3,
  CONVSIM_STATUS_DIMENSION_MISMATCH = 4,
  CONVSIM_STATUS_FORMAT = 5,
  CONVSIM_STATUS_IO = 6,
  CONVSIM_STATUS_VERIFICATION = 7,
  CONVSIM_STATUS_BUFFER_TOO_SMALL = 8,
  CONVSIM_STATUS_PANIC = 9,
} ConvsimStatus;

typedef enum ConvsimFormat {
  CONVSIM_FORMAT_CSV = 0,
  CONVSIM_FORMAT_JSON = 1,
} ConvsimFormat;

// A parsed and validated network description.
typedef struct ConvsimNetwork ConvsimNetwork;

// Outputs and per-layer reports of one network run.
typedef struct ConvsimRun ConvsimRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *convsim_last_error(void);

// Library version as a static NUL-terminated string.
const char *convsim_version(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void convsim_string_free(char *s);

// Parses a TOML network description.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum ConvsimStatus convsim_network_from_toml(const char *text, struct ConvsimNetwork **out);

// Loads a TOML network description; relative weight paths resolve against
// its directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ConvsimStatus convsim_network_load(const char *path, struct ConvsimNetwork **out);

// One of the built-in networks: alexnet, vgg, googlenet, resnet.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum ConvsimStatus convsim_network_builtin(const char *name, struct ConvsimNetwork **out);

// # Safety
// `net` must be NULL or a handle from this library, not yet freed.
void convsim_network_free(struct ConvsimNetwork *net);

// Number of layers and input shape `(C, H, W)` of the first layer. Any
// output pointer may be NULL.
//
// # Safety
// `net` must be a live handle.
enum ConvsimStatus convsim_network_shape(const struct ConvsimNetwork *net,
                                         size_t *layers,
                                         size_t *channels,
                                         size_t *height,
                                         size_t *width);

// Runs the network on `batch` inputs laid out back to back as `(C, H, W)`
// int16 maps. With `input` NULL the config's synthetic input is used and
// `len`/`batch` are ignored. A nonzero `verify` checks every layer against
// the software reference; a mismatch returns `Verification`.
//
// # Safety
// `net` must be a live handle; `input` must point to `len` values or be
// NULL; `out` must be writable.
enum ConvsimStatus convsim_network_run(const struct ConvsimNetwork *net,
                                       const int16_t *input,
                                       size_t len,
                                       size_t batch,
                                       int verify,
                                       struct ConvsimRun **out);

// # Safety
// `run` must be NULL or a handle from this library, not yet freed.
void convsim_run_free(struct ConvsimRun *run);

// Total simulated cycles over all layers.
//
// # Safety
// `run` must be a live handle; `cycles` must be writable.
enum ConvsimStatus convsim_run_cycles(const struct ConvsimRun *run, uint64_t *cycles);

// Copies the final feature maps into `buf`. `*len` receives the number of
// values; call with `buf` NULL to query it. Returns `BufferTooSmall` when
// `cap` is short.
//
// # Safety
// `run` must be a live handle; `buf` must hold `cap` values or be NULL;
// `len` must be writable.
enum ConvsimStatus convsim_run_output(const struct ConvsimRun *run,
                                      int16_t *buf,
                                      size_t cap,
                                      size_t *len);

// Per-layer report as CSV or JSON. Free the string with
// `convsim_string_free`.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum ConvsimStatus convsim_run_report(const struct ConvsimRun *run,
                                      enum ConvsimFormat format,
                                      char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVSIM_H */
