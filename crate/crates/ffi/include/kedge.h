#ifndef KEDGE_H
#define KEDGE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Decision of a policy evaluation.
 */
typedef enum KedgeOutcome {
  KEDGE_OUTCOME_APPROVE = 0,
  KEDGE_OUTCOME_REJECT = 1,
  KEDGE_OUTCOME_ESCALATE = 2,
} KedgeOutcome;

/**
 * Result code of every fallible call.
 */
typedef enum KedgeStatus {
  KEDGE_STATUS_OK = 0,
  KEDGE_STATUS_NULL_POINTER = 1,
  KEDGE_STATUS_INVALID_UTF8 = 2,
  KEDGE_STATUS_INVALID_ARGUMENT = 3,
  KEDGE_STATUS_IO = 4,
  KEDGE_STATUS_PARSE = 5,
  KEDGE_STATUS_CHAIN_BROKEN = 6,
  KEDGE_STATUS_NOT_FOUND = 7,
  KEDGE_STATUS_EVALUATION = 8,
  KEDGE_STATUS_PANIC = 99,
} KedgeStatus;

/**
 * Opaque handle to a loaded evidence chain.
 */
typedef struct KedgeChain KedgeChain;

/**
 * Opaque handle to a parsed policy set.
 */
typedef struct KedgePolicySet KedgePolicySet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *kedge_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kedge_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void kedge_string_free(char *s);

/**
 * Verifies a serialized log. Returns `Ok` for an intact chain and
 * `ChainBroken` otherwise; `out_index` receives the first broken entry index
 * or -1.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out_index` must be writable.
 */
enum KedgeStatus kedge_verify_bytes(const uint8_t *data, size_t len, int64_t *out_index);

/**
 * Loads a JSONL log from disk without verifying it.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KedgeStatus kedge_chain_load(const char *path, struct KedgeChain **out);

/**
 * Parses JSONL text into a chain handle without verifying it.
 *
 * # Safety
 * `jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum KedgeStatus kedge_chain_parse(const char *jsonl, struct KedgeChain **out);

/**
 * # Safety
 * `chain` must be NULL or a handle from this library not yet freed.
 */
void kedge_chain_free(struct KedgeChain *chain);

/**
 * Number of entries, or 0 for a NULL handle.
 *
 * # Safety
 * `chain` must be NULL or a live handle.
 */
size_t kedge_chain_len(const struct KedgeChain *chain);

/**
 * Same contract as [`kedge_verify_bytes`], over a loaded chain.
 *
 * # Safety
 * `chain` must be a live handle; `out_index` must be writable.
 */
enum KedgeStatus kedge_chain_verify(const struct KedgeChain *chain, int64_t *out_index);

/**
 * Derived state after the first `at` entries, as JSON.
 *
 * # Safety
 * `chain` must be a live handle; `out` must be writable.
 */
enum KedgeStatus kedge_chain_replay_json(const struct KedgeChain *chain, size_t at, char **out);

/**
 * Every entry recorded for one intent, as a JSON array.
 *
 * # Safety
 * `chain` must be a live handle; `intent_id` a NUL-terminated string; `out`
 * writable.
 */
enum KedgeStatus kedge_chain_lineage_json(const struct KedgeChain *chain,
                                          const char *intent_id,
                                          char **out);

/**
 * Parses policy source text.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum KedgeStatus kedge_policy_parse(const char *source, struct KedgePolicySet **out);

/**
 * # Safety
 * `set` must be NULL or a handle from this library not yet freed.
 */
void kedge_policy_free(struct KedgePolicySet *set);

/**
 * Number of rules, or 0 for a NULL handle.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t kedge_policy_len(const struct KedgePolicySet *set);

/**
 * Evaluates one JSON request. `out_outcome` receives the decision; when
 * `out_trace` is not NULL it receives the decision trace as JSON. An
 * evaluation error yields `Evaluation` with `out_outcome` set to Escalate.
 *
 * # Safety
 * `set` must be a live handle; `request_json` a NUL-terminated string;
 * `out_outcome` writable; `out_trace` NULL or writable.
 */
enum KedgeStatus kedge_policy_evaluate(const struct KedgePolicySet *set,
                                       const char *request_json,
                                       enum KedgeOutcome *out_outcome,
                                       char **out_trace);

/**
 * Runs a scenario given as JSON and returns the run report as JSON. A
 * negative `seed` keeps the scenario's own seed.
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string; `out_report` writable.
 */
enum KedgeStatus kedge_scenario_run(const char *scenario_json, int64_t seed, char **out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEDGE_H */
