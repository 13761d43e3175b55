#ifndef RANDPUSH_H
#define RANDPUSH_H

/* Generated by cbindgen from randpush-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C ABI call. Zero is success; everything else is an error
 * whose description is available via `rp_last_error_message`.
 */
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  RP_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  RP_STATUS_INVALID_UTF8 = 2,
  /**
   * The input was well-formed but semantically invalid.
   */
  RP_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A file could not be read.
   */
  RP_STATUS_IO_ERROR = 4,
  /**
   * JSON (or CSV) could not be parsed.
   */
  RP_STATUS_PARSE_ERROR = 5,
  /**
   * The simulation itself failed.
   */
  RP_STATUS_RUN_ERROR = 6,
} RpStatus;

/**
 * Opaque handle to a validated graph ensemble.
 */
typedef struct RpEnsemble RpEnsemble;

/**
 * Constants derived from an ensemble: node count, window length, the
 * window selection probability floor `p`, gate threshold `delta`, `c1`,
 * and the contraction factor `lambda` in log space (`ln_lambda` and
 * `ln(1 - lambda)`, the only faithful representations when `lambda`
 * rounds to 1 in double precision).
 */
typedef struct RpBoundConstants {
  size_t n;
  size_t window;
  double p;
  double delta;
  double c1;
  double ln_lambda;
  double ln_one_minus_lambda;
} RpBoundConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on the calling thread, or
 * an empty string if none occurred. Valid until the next failing call
 * on this thread; do not free.
 */
const char *rp_last_error_message(void);

/**
 * Library version as a static string; do not free.
 */
const char *rp_version(void);

/**
 * Parse and validate an ensemble from its JSON document. On success,
 * writes a handle the caller must release with `rp_ensemble_free`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must point to writable
 * pointer storage.
 */
enum RpStatus rp_ensemble_from_json(const char *json, struct RpEnsemble **out);

/**
 * Load and validate an ensemble from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable
 * pointer storage.
 */
enum RpStatus rp_ensemble_load_file(const char *path, struct RpEnsemble **out);

/**
 * Release a handle returned by the `rp_ensemble_*` constructors.
 * Passing NULL is a no-op.
 *
 * # Safety
 * `handle` must be NULL or a pointer previously returned by an
 * `rp_ensemble_*` constructor, released at most once.
 */
void rp_ensemble_free(struct RpEnsemble *handle);

/**
 * Number of nodes, or 0 if the handle is NULL.
 *
 * # Safety
 * `handle` must be NULL or a live ensemble handle.
 */
size_t rp_ensemble_node_count(const struct RpEnsemble *handle);

/**
 * Number of member graphs, or 0 if the handle is NULL.
 *
 * # Safety
 * `handle` must be NULL or a live ensemble handle.
 */
size_t rp_ensemble_graph_count(const struct RpEnsemble *handle);

/**
 * Compute the constants the ensemble determines (see
 * [`RpBoundConstants`]). Fails with `RP_STATUS_INVALID_ARGUMENT` for
 * single-node ensembles, which have none.
 *
 * # Safety
 * `handle` must be a live ensemble handle; `out` must point to writable
 * `RpBoundConstants` storage.
 */
enum RpStatus rp_bound_constants(const struct RpEnsemble *handle, struct RpBoundConstants *out);

/**
 * Run every validation check on an ensemble JSON document and return
 * the report as JSON: `{"valid": bool, "checks": [...]}`. The call
 * succeeds even when the ensemble is invalid; only malformed JSON or a
 * NULL argument fails.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_report` must be NULL or
 * point to writable pointer storage (free the result with
 * `rp_string_free`).
 */
enum RpStatus rp_validate_ensemble_json(const char *json, char **out_report);

/**
 * Run a full experiment from a config JSON document (the same schema
 * the CLI reads; ensemble paths are resolved against the process
 * working directory). On success, writes the metrics CSV to
 * `out_metrics_csv` and the run summary JSON to `out_summary_json`;
 * either may be NULL to skip that artifact. Free both with
 * `rp_string_free`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; the out-parameters
 * must be NULL or point to writable pointer storage.
 */
enum RpStatus rp_run_experiment_json(const char *config_json,
                                     char **out_metrics_csv,
                                     char **out_summary_json);

/**
 * Release a string returned by this library. Passing NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a pointer previously returned through one of this
 * library's string out-parameters, released at most once.
 */
void rp_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RANDPUSH_H */
