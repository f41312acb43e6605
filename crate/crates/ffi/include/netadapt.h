#ifndef NETADAPT_H
#define NETADAPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NaStatus {
  NA_STATUS_OK = 0,
  NA_STATUS_NULL_ARGUMENT = 1,
  NA_STATUS_INVALID_UTF8 = 2,
  NA_STATUS_PARSE = 3,
  NA_STATUS_INVALID_SCENARIO = 4,
  NA_STATUS_UNKNOWN_PLANNER = 5,
  NA_STATUS_RUN_FAILED = 6,
  NA_STATUS_IO = 7,
  NA_STATUS_PANIC = 8,
} NaStatus;

// A parsed link-weight expression.
typedef struct NaExpr NaExpr;

// The outcome of one simulated run.
typedef struct NaRunResult NaRunResult;

// A loaded, validated scenario.
typedef struct NaScenario NaScenario;

typedef struct NaMetrics {
  uint64_t congestion_occurrences;
  uint64_t congestion_duration_ticks;
  double packet_loss_ratio;
  uint64_t planner_invocations;
  uint64_t unresolved_plans;
  uint64_t routing_failures;
} NaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
const char *na_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void na_string_free(char *s);

// Loads a scenario JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NaStatus na_scenario_load(const char *path, struct NaScenario **out);

// Parses a scenario from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum NaStatus na_scenario_from_json(const char *json, struct NaScenario **out);

// # Safety
// `s` must be NULL or a live scenario handle.
uint64_t na_scenario_duration(const struct NaScenario *s);

// # Safety
// `s` must be NULL or a live scenario handle.
uintptr_t na_scenario_request_count(const struct NaScenario *s);

// # Safety
// `s` must be NULL or a scenario handle not yet freed.
void na_scenario_free(struct NaScenario *s);

// Parses an infix weight expression over `util`, `threshold`, `bw`, `dl` and constants.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum NaStatus na_expr_parse(const char *text, struct NaExpr **out);

// Raw value of the expression for one link.
//
// # Safety
// `e` must be a live expression handle; `out` must be writable.
enum NaStatus na_expr_evaluate(const struct NaExpr *e,
                               double bandwidth_mbps,
                               double delay_ms,
                               double utilization,
                               double threshold,
                               double *out);

// Integer link weight (at least 1) the router would use. Returns 0 for a NULL handle.
//
// # Safety
// `e` must be NULL or a live expression handle.
uint64_t na_expr_link_weight(const struct NaExpr *e,
                             double bandwidth_mbps,
                             double delay_ms,
                             double utilization,
                             double threshold);

// Canonical text of the expression; free with [`na_string_free`].
//
// # Safety
// `e` must be NULL or a live expression handle.
char *na_expr_to_string(const struct NaExpr *e);

// # Safety
// `e` must be NULL or an expression handle not yet freed.
void na_expr_free(struct NaExpr *e);

// Runs the scenario under `planner` (`genadapt`, `reroute`, `static-unit` or `static-invbw`).
//
// `generations` of 0 uses the scenario's suggested budget, else the planner default.
// `weight_expr` may be NULL; when set, the adaptive planner applies that expression instead of
// searching. The scenario is not modified.
//
// # Safety
// `scenario` must be a live handle, `planner` a NUL-terminated string, `weight_expr` NULL or a
// live handle, and `out` writable.
enum NaStatus na_run(const struct NaScenario *scenario,
                     const char *planner,
                     uint64_t seed,
                     uintptr_t generations,
                     const struct NaExpr *weight_expr,
                     struct NaRunResult **out);

// # Safety
// `r` must be a live run handle; `out` must be writable.
enum NaStatus na_run_metrics(const struct NaRunResult *r, struct NaMetrics *out);

// Tab-separated event log, one event per line; free with [`na_string_free`].
//
// # Safety
// `r` must be NULL or a live run handle.
char *na_run_event_log(const struct NaRunResult *r);

// Metrics CSV (header plus one row) as written by the command-line tool.
//
// # Safety
// `r` must be NULL or a live run handle.
char *na_run_metrics_csv(const struct NaRunResult *r);

// # Safety
// `r` must be NULL or a run handle not yet freed.
void na_run_free(struct NaRunResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETADAPT_H */
