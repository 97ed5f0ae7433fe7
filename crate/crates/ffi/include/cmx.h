#ifndef CMX_H
#define CMX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CmxStatus {
  CMX_STATUS_OK = 0,
  CMX_STATUS_NULL_ARGUMENT = 1,
  CMX_STATUS_INVALID_UTF8 = 2,
  CMX_STATUS_INVALID_DATASET = 3,
  CMX_STATUS_INVALID_SPEC = 4,
  // The spec's conditions match no records.
  CMX_STATUS_ZERO_MASS = 5,
  CMX_STATUS_INTERNAL = 6,
} CmxStatus;

// Output format of `cmx_query`.
typedef enum CmxFormat {
  CMX_FORMAT_JSON = 0,
  CMX_FORMAT_CSV = 1,
  CMX_FORMAT_TABLE = 2,
} CmxFormat;

// An ingested, immutable dataset.
typedef struct CmxDataset CmxDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Ingests a schema document and an NDJSON prediction log.
//
// # Safety
// `schema` and `records` point to `schema_len` and `records_len` readable
// bytes; `out` is writable.
enum CmxStatus cmx_dataset_new(const uint8_t *schema,
                               uintptr_t schema_len,
                               const uint8_t *records,
                               uintptr_t records_len,
                               struct CmxDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `ds` comes from `cmx_dataset_new` and is not used afterwards.
void cmx_dataset_free(struct CmxDataset *ds);

// Number of records, 0 for null.
//
// # Safety
// `ds` is null or a live dataset.
uintptr_t cmx_dataset_len(const struct CmxDataset *ds);

// Evaluates a NUL-terminated spec and writes the view in `format` to `out`.
//
// # Safety
// `ds` is a live dataset, `spec` a NUL-terminated string, `out` writable.
enum CmxStatus cmx_query(const struct CmxDataset *ds,
                         const char *spec,
                         enum CmxFormat format,
                         char **out);

// Parses spec text and writes its canonical serialization to `out`.
//
// # Safety
// `spec` is a NUL-terminated string, `out` writable.
enum CmxStatus cmx_spec_canonicalize(const char *spec, char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` comes from this library and is not used afterwards.
void cmx_string_free(char *s);

// Message for the last failed call on this thread; empty after success.
// Valid until the next call into the library on the same thread.
const char *cmx_last_error(void);

// Library version, static.
const char *cmx_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMX_H */
