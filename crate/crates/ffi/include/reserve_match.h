#ifndef RESERVE_MATCH_H
#define RESERVE_MATCH_H

/* Generated by cbindgen from the reserve-match-ffi crate. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of a library call.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_UTF8 = 2,
  RM_STATUS_PARSE_ERROR = 3,
  RM_STATUS_VALIDATION_ERROR = 4,
  RM_STATUS_INVALID_INPUT = 5,
  RM_STATUS_CAP_EXCEEDED = 6,
  RM_STATUS_IO_ERROR = 7,
  RM_STATUS_BUFFER_TOO_SMALL = 8,
  RM_STATUS_INTERNAL = 9,
} RmStatus;

/**
 * A validated dynamic reserves instance. Slot-specific inputs are
 * converted on load.
 */
typedef struct RmInstance RmInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the outcome of the most recent call on this thread;
 * empty after a success. Valid until the next library call on the same
 * thread.
 */
const char *rm_last_error(void);

/**
 * Library version as a static string.
 */
const char *rm_version(void);

/**
 * Parses and validates instance JSON text.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum RmStatus rm_instance_from_json(const char *json, struct RmInstance **out);

/**
 * Loads and validates an instance file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum RmStatus rm_instance_load(const char *path, struct RmInstance **out);

/**
 * Releases an instance. Null is ignored.
 *
 * # Safety
 * `inst` must come from this library and not be used afterwards.
 */
void rm_instance_free(struct RmInstance *inst);

/**
 * Number of students, or 0 for a null instance.
 *
 * # Safety
 * `inst` must be null or a live instance.
 */
size_t rm_instance_num_students(const struct RmInstance *inst);

/**
 * Number of schools, or 0 for a null instance.
 *
 * # Safety
 * `inst` must be null or a live instance.
 */
size_t rm_instance_num_schools(const struct RmInstance *inst);

/**
 * Number of contracts, or 0 for a null instance.
 *
 * # Safety
 * `inst` must be null or a live instance.
 */
size_t rm_instance_num_contracts(const struct RmInstance *inst);

/**
 * Copies the name of a contract into a newly allocated string.
 *
 * # Safety
 * `inst` must be a live instance and `out` a writable pointer.
 */
enum RmStatus rm_contract_name(const struct RmInstance *inst, size_t contract, char **out);

/**
 * Runs the cumulative offer process. Writes each student's contract
 * index, or -1 if unassigned, into `assignment`, which must hold at least
 * `rm_instance_num_students` entries.
 *
 * # Safety
 * `inst` must be a live instance and `assignment` point to `len` writable
 * entries.
 */
enum RmStatus rm_match(const struct RmInstance *inst, int64_t *assignment, size_t len);

/**
 * Runs the cumulative offer process and returns the machine-readable
 * match report.
 *
 * # Safety
 * `inst` must be a live instance and `out` a writable pointer.
 */
enum RmStatus rm_match_json(const struct RmInstance *inst, char **out);

/**
 * Choice of `school` from the offered contracts. Writes 1 for chosen and
 * 0 for rejected into `chosen`, parallel to `offers`.
 *
 * # Safety
 * `inst` must be a live instance, `offers` point to `len` readable entries
 * and `chosen` to `len` writable entries.
 */
enum RmStatus rm_choose(const struct RmInstance *inst,
                        size_t school,
                        const size_t *offers,
                        size_t len,
                        uint8_t *chosen);

/**
 * Checks the stability of an allocation given as JSON
 * (`{"contracts": [names]}`). Sets `stable` and, when `report` is not
 * null, returns the machine-readable stability report.
 *
 * # Safety
 * `inst` must be a live instance, `allocation_json` a nul-terminated
 * string, `stable` writable and `report` null or writable.
 */
enum RmStatus rm_verify_json(const struct RmInstance *inst,
                             const char *allocation_json,
                             bool *stable,
                             char **report);

/**
 * Runs the property audit on `count` generated instances and returns the
 * machine-readable report. `passed` reports whether every suite passed.
 *
 * # Safety
 * `passed` and `out` must be writable pointers.
 */
enum RmStatus rm_audit_json(uint64_t seed, size_t count, bool *passed, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void rm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESERVE_MATCH_H */
