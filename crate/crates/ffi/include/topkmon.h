#ifndef TOPKMON_H
#define TOPKMON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TkmFamily {
  TKM_FAMILY_RANDOM_WALK = 0,
  TKM_FAMILY_UNIFORM = 1,
  TKM_FAMILY_ADVERSARIAL_CROSSING = 2,
  TKM_FAMILY_CONSTANT = 3,
} TkmFamily;

typedef enum TkmMode {
  TKM_MODE_MAX = 0,
  TKM_MODE_MIN = 1,
} TkmMode;

/**
 * Result code of every fallible call.
 */
typedef enum TkmStatus {
  TKM_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  TKM_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or inconsistent (k, n, lengths, times).
   */
  TKM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Reading or writing a file failed.
   */
  TKM_STATUS_IO = 3,
  /**
   * Input could not be parsed (CSV trace, path encoding).
   */
  TKM_STATUS_PARSE = 4,
  /**
   * The monitor's answer disagreed with the brute-force oracle.
   */
  TKM_STATUS_ORACLE_MISMATCH = 5,
  /**
   * The caller's buffer is too small; the required length was reported.
   */
  TKM_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  TKM_STATUS_PANIC = 7,
} TkmStatus;

/**
 * Opaque monitor handle: the coordinator, its nodes and the message fabric.
 */
typedef struct TkmMonitor TkmMonitor;

/**
 * Opaque trace handle.
 */
typedef struct TkmTrace TkmTrace;

/**
 * Message counts per kind.
 */
typedef struct TkmTally {
  uint64_t protocol_upload;
  uint64_t protocol_round_broadcast;
  uint64_t filter_broadcast;
  uint64_t initiation_broadcast;
  uint64_t direct_down;
  uint64_t total;
} TkmTally;

/**
 * Outcome of a full simulation checked against the oracle.
 */
typedef struct TkmRunSummary {
  struct TkmTally tally;
  uint64_t opt_lower_bound;
  uint64_t delta;
  uint64_t resets;
  uint32_t max_handlers_between_resets;
  bool within_envelope;
  bool passed;
} TkmRunSummary;

/**
 * Summary of one monitor step.
 */
typedef struct TkmStepReport {
  uint64_t t;
  uint64_t violations;
  bool handler_invoked;
  bool reset_invoked;
  bool filters_changed;
  /**
   * Messages sent during this step.
   */
  uint64_t messages;
} TkmStepReport;

/**
 * Result of one extremum protocol run.
 */
typedef struct TkmProtocolOutcome {
  /**
   * 1-based index into the caller's value array.
   */
  uint32_t winner;
  uint64_t winner_value;
  uint32_t rounds;
  uint64_t uploads;
  uint64_t round_broadcasts;
} TkmProtocolOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *tkm_last_error(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *tkm_status_name(enum TkmStatus status);

/**
 * Builds a trace from `t * n` values laid out row by row (time-major).
 *
 * # Safety
 * `values` must point to `t * n` readable `u64`s; `out` must be writable.
 */
enum TkmStatus tkm_trace_new(const uint64_t *values, size_t n, size_t t, struct TkmTrace **out);

/**
 * Generates a synthetic trace with default generator parameters.
 *
 * # Safety
 * `out` must be writable.
 */
enum TkmStatus tkm_trace_generate(enum TkmFamily family,
                                  size_t n,
                                  size_t k,
                                  uint64_t t,
                                  uint64_t seed,
                                  struct TkmTrace **out);

/**
 * Loads a `t,node,value` CSV trace.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum TkmStatus tkm_trace_load(const char *path, struct TkmTrace **out);

/**
 * # Safety
 * `trace` must be NULL or a handle from this library not yet freed.
 */
void tkm_trace_free(struct TkmTrace *trace);

/**
 * Number of nodes, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
size_t tkm_trace_nodes(const struct TkmTrace *trace);

/**
 * Number of time steps, or 0 for NULL.
 *
 * # Safety
 * `trace` must be NULL or a live handle.
 */
uint64_t tkm_trace_len(const struct TkmTrace *trace);

/**
 * Copies the `n` values at time `t` into `out`, which holds `cap` slots.
 *
 * # Safety
 * `trace` must be a live handle; `out` must have room for `cap` values.
 */
enum TkmStatus tkm_trace_values(const struct TkmTrace *trace,
                                uint64_t t,
                                uint64_t *out,
                                size_t cap);

/**
 * Greedy lower bound on the filter updates any filter-based algorithm needs.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum TkmStatus tkm_oracle_lower_bound(const struct TkmTrace *trace, size_t k, uint64_t *out);

/**
 * Largest gap between the k-th and (k+1)-st value over the trace.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum TkmStatus tkm_oracle_delta(const struct TkmTrace *trace, size_t k, uint64_t *out);

/**
 * Runs the monitor over the whole trace, checking every step against the
 * oracle. Returns `TKM_STATUS_ORACLE_MISMATCH` on a wrong answer.
 *
 * # Safety
 * `trace` must be a live handle; `out` must be writable.
 */
enum TkmStatus tkm_simulate(const struct TkmTrace *trace,
                            size_t k,
                            uint64_t seed,
                            struct TkmRunSummary *out);

/**
 * Creates a monitor and runs the initial filter reset on `values` at t = 1.
 *
 * # Safety
 * `values` must point to `n` readable `u64`s; `out` must be writable.
 */
enum TkmStatus tkm_monitor_new(const uint64_t *values,
                               size_t n,
                               size_t k,
                               uint64_t seed,
                               struct TkmMonitor **out);

/**
 * # Safety
 * `monitor` must be NULL or a handle from this library not yet freed.
 */
void tkm_monitor_free(struct TkmMonitor *monitor);

/**
 * Advances one time step with the nodes' new `values`.
 *
 * # Safety
 * `monitor` must be a live handle; `values` must point to `n` readable
 * `u64`s; `report` may be NULL.
 */
enum TkmStatus tkm_monitor_step(struct TkmMonitor *monitor,
                                const uint64_t *values,
                                size_t n,
                                struct TkmStepReport *report);

/**
 * Writes the monitored top-k node ids (1-based, ascending) into `out`.
 * `len` receives k even when the buffer is too small.
 *
 * # Safety
 * `monitor` must be a live handle; `out` must have room for `cap` ids;
 * `len` must be writable.
 */
enum TkmStatus tkm_monitor_top_k(const struct TkmMonitor *monitor,
                                 uint32_t *out,
                                 size_t cap,
                                 size_t *len);

/**
 * Cumulative message counts, initialization included.
 *
 * # Safety
 * `monitor` must be a live handle; `out` must be writable.
 */
enum TkmStatus tkm_monitor_tally(const struct TkmMonitor *monitor, struct TkmTally *out);

/**
 * Current time step, or 0 for NULL.
 *
 * # Safety
 * `monitor` must be NULL or a live handle.
 */
uint64_t tkm_monitor_time(const struct TkmMonitor *monitor);

/**
 * Runs one extremum protocol among `len` participants holding `values`,
 * with participant bound `bound` (0 means `len`).
 *
 * # Safety
 * `values` must point to `len` readable `u64`s; `out` must be writable.
 */
enum TkmStatus tkm_protocol_run(enum TkmMode mode,
                                const uint64_t *values,
                                size_t len,
                                uint64_t bound,
                                uint64_t seed,
                                struct TkmProtocolOutcome *out);

/**
 * Upper bound on the probability that the node of rank `rank` uploads
 * during a protocol with bound `bound`. Returns NaN for invalid input.
 */
double tkm_send_probability_bound(uint64_t rank, uint64_t bound);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPKMON_H */
