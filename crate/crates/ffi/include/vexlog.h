/* SPDX-License-Identifier: Apache-2.0 */

#ifndef VEXLOG_H
#define VEXLOG_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VexStatus {
  VEX_STATUS_OK = 0,
  VEX_STATUS_NULL_ARGUMENT = 1,
  VEX_STATUS_INVALID_UTF8 = 2,
  VEX_STATUS_PARSE = 3,
  VEX_STATUS_CONFIG = 4,
  VEX_STATUS_FACTS = 5,
  VEX_STATUS_EXECUTION = 6,
  VEX_STATUS_NOT_FOUND = 7,
  VEX_STATUS_PANIC = 8,
} VexStatus;

/**
 * Output of one run.
 */
typedef struct VexResult VexResult;

/**
 * A loaded program with pending input facts.
 */
typedef struct VexSession VexSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses `program` under the provenance named `provenance` (for example
 * `"unit"` or `"diff-add-mult-prob"`).
 *
 * # Safety
 * `program` and `provenance` must be NUL-terminated strings and `out` a
 * valid pointer.
 */
enum VexStatus vex_session_new(const char *program,
                               const char *provenance,
                               struct VexSession **out);

/**
 * # Safety
 * `s` must come from [`vex_session_new`] and not be used afterwards.
 */
void vex_session_free(struct VexSession *s);

/**
 * Sets the worker thread count; 0 is treated as 1.
 *
 * # Safety
 * `s` must be a live session.
 */
enum VexStatus vex_session_set_threads(struct VexSession *s, size_t threads);

/**
 * Sets how many samples run together; 1 disables batching.
 *
 * # Safety
 * `s` must be a live session.
 */
enum VexStatus vex_session_set_batch(struct VexSession *s, size_t batch);

/**
 * Starts a new sample; facts added afterwards belong to it.
 *
 * # Safety
 * `s` must be a live session.
 */
enum VexStatus vex_session_new_sample(struct VexSession *s);

/**
 * Adds facts for `relation` to the current sample. `facts` uses the
 * `.facts` file format.
 *
 * # Safety
 * `s` must be a live session; strings must be NUL-terminated.
 */
enum VexStatus vex_session_add_facts(struct VexSession *s, const char *relation, const char *facts);

/**
 * Evaluates the program over every sample.
 *
 * # Safety
 * `s` must be a live session and `out` a valid pointer.
 */
enum VexStatus vex_session_run(struct VexSession *s, struct VexResult **out);

/**
 * # Safety
 * `r` must come from [`vex_session_run`] and not be used afterwards.
 */
void vex_result_free(struct VexResult *r);

/**
 * Number of samples in a result.
 *
 * # Safety
 * `r` must be a live result.
 */
size_t vex_result_samples(const struct VexResult *r);

/**
 * Renders `relation` of `sample` in the `.facts` format. Release the
 * string with [`vex_string_free`].
 *
 * # Safety
 * `r` must be a live result, `relation` NUL-terminated and `out` valid.
 */
enum VexStatus vex_result_relation(const struct VexResult *r,
                                   size_t sample,
                                   const char *relation,
                                   char **out);

/**
 * Run statistics as JSON. Release the string with [`vex_string_free`].
 *
 * # Safety
 * `r` must be a live result and `out` valid.
 */
enum VexStatus vex_result_stats_json(const struct VexResult *r, char **out);

/**
 * # Safety
 * `p` must come from this library and not be used afterwards.
 */
void vex_string_free(char *p);

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into the library from this thread.
 */
const char *vex_last_error(void);

/**
 * Static name of a status code.
 */
const char *vex_status_name(enum VexStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEXLOG_H */
