/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CAMPUSNET_H
#define CAMPUSNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CN_OK = 0,
  CN_NULL_ARGUMENT = 1,
  CN_INVALID_UTF8 = 2,
  CN_PARSE_ERROR = 3,
  CN_FORBIDDEN = 4,
  CN_TARGET_UNKNOWN = 5,
  CN_VALIDATION_FAILED = 6,
  CN_USAGE = 7,
  CN_BUFFER_TOO_SMALL = 8,
  CN_INTERNAL = 9,
} CnStatus;

/**
 * Opaque handle.
 */
typedef struct CnPlane CnPlane;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Built-in demo campus, converged.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
CnStatus cn_plane_new_demo(uint64_t seed, bool fast_timers, CnPlane **out);

/**
 * Network from topology text, default firewall policy, converged.
 *
 * # Safety
 * `topology` must be a NUL-terminated string; `out` valid for a write.
 */
CnStatus cn_plane_new(const char *topology, uint64_t seed, bool fast_timers, CnPlane **out);

/**
 * # Safety
 * `h` must come from a constructor here and not be used afterwards.
 */
void cn_plane_free(CnPlane *h);

/**
 * Message for the last failed call on `h`; empty after a success.
 * Valid until the next call on `h`.
 *
 * # Safety
 * `h` must be a live handle or null.
 */
const char *cn_last_error(const CnPlane *h);

const char *cn_status_name(CnStatus status);

/**
 * Simulated time in nanoseconds.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for a write.
 */
CnStatus cn_plane_now_ns(CnPlane *h, uint64_t *out);

/**
 * # Safety
 * `h` must be a live handle.
 */
CnStatus cn_plane_advance_ms(CnPlane *h, uint64_t ms);

/**
 * Number of links the spanning tree currently blocks.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for a write.
 */
CnStatus cn_plane_blocked_links(CnPlane *h, size_t *out);

/**
 * Number of entries in the event log.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for a write.
 */
CnStatus cn_plane_event_count(CnPlane *h, size_t *out);

/**
 * Runs one shell line as `actor` with `role` ("netadmin", "desktop",
 * "servicedesk") and copies its output into `buf`.
 *
 * # Safety
 * `h` must be a live handle; strings NUL-terminated; `buf` writable for
 * `len` bytes; `needed` null or valid for a write.
 */
CnStatus cn_plane_exec(CnPlane *h,
                       const char *role,
                       const char *actor,
                       const char *line,
                       char *buf,
                       size_t len,
                       size_t *needed);

/**
 * Event log entries from `since` on as NDJSON.
 *
 * # Safety
 * As for `cn_plane_exec`.
 */
CnStatus cn_plane_events(CnPlane *h, size_t since, char *buf, size_t len, size_t *needed);

/**
 * Runs a scenario script. `passed` receives whether every assertion
 * held; `buf` receives the report, or the script error with its line.
 *
 * # Safety
 * `script` NUL-terminated; `passed` valid for a write; `buf`/`needed`
 * as for `cn_plane_exec`.
 */
CnStatus cn_run_scenario(const char *script,
                         uint64_t seed,
                         bool *passed,
                         char *buf,
                         size_t len,
                         size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAMPUSNET_H */
