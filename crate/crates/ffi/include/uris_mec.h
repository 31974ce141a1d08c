#ifndef URIS_MEC_H
#define URIS_MEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UrisAlgorithm {
  URIS_ALGORITHM_MAX_TOTAL_EE = 0,
  URIS_ALGORITHM_MAX_MIN_EE = 1,
  URIS_ALGORITHM_HEURISTIC_TRAJ = 2,
  URIS_ALGORITHM_UAV_SERVER = 3,
} UrisAlgorithm;

// Outer-loop outcome of a finished run.
typedef enum UrisRunStatus {
  URIS_RUN_STATUS_CONVERGED = 0,
  URIS_RUN_STATUS_STALLED = 1,
  URIS_RUN_STATUS_MAX_OUTER = 2,
} UrisRunStatus;

// Result code of every fallible call.
typedef enum UrisStatus {
  URIS_STATUS_OK = 0,
  URIS_STATUS_NULL_POINTER = 1,
  URIS_STATUS_INVALID_UTF8 = 2,
  URIS_STATUS_INVALID_SCENARIO = 3,
  URIS_STATUS_INVALID_ARGUMENT = 4,
  URIS_STATUS_SOLVE_FAILED = 5,
  URIS_STATUS_BUFFER_TOO_SMALL = 6,
  URIS_STATUS_PANIC = 7,
} UrisStatus;

// Opaque result of one run.
typedef struct UrisReport UrisReport;

// Opaque scenario handle.
typedef struct UrisScenario UrisScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *uris_last_error(void);

// Library version as a static NUL-terminated string.
const char *uris_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void uris_string_free(char *s);

// Built-in default scenario.
//
// # Safety
// `out` must be valid for writes.
enum UrisStatus uris_scenario_default(struct UrisScenario **out);

// Parses and validates a scenario document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
enum UrisStatus uris_scenario_from_json(const char *json, struct UrisScenario **out);

// Serializes a scenario; free the result with [`uris_string_free`].
//
// # Safety
// `scenario` must be a live handle; `out` must be valid for writes.
enum UrisStatus uris_scenario_to_json(const struct UrisScenario *scenario, char **out);

// # Safety
// `scenario` must be a live handle; `users` and `slots` valid for writes.
enum UrisStatus uris_scenario_dims(const struct UrisScenario *scenario,
                                   size_t *users,
                                   size_t *slots);

// Changes the slot count, keeping the slot length.
//
// # Safety
// `scenario` must be a live handle.
enum UrisStatus uris_scenario_set_slots(struct UrisScenario *scenario, size_t num_slots);

// # Safety
// `scenario` must be null or a handle not yet freed.
void uris_scenario_free(struct UrisScenario *scenario);

// Runs one algorithm. `tol` is the relative outer-loop tolerance.
//
// # Safety
// `scenario` must be a live handle; `out` must be valid for writes.
enum UrisStatus uris_run(const struct UrisScenario *scenario,
                         enum UrisAlgorithm algorithm,
                         double tol,
                         size_t max_outer,
                         struct UrisReport **out);

// # Safety
// `report` must be null or a handle not yet freed.
void uris_report_free(struct UrisReport *report);

// Energy efficiency (bits/J), total bits, weighted total energy (J).
//
// # Safety
// `report` must be a live handle; every non-null output valid for writes.
enum UrisStatus uris_report_summary(const struct UrisReport *report,
                                    double *ee,
                                    double *total_bits,
                                    double *total_energy);

// # Safety
// `report` must be a live handle; outputs valid for writes.
enum UrisStatus uris_report_status(const struct UrisReport *report,
                                   enum UrisRunStatus *status,
                                   size_t *outer_iterations);

// Copies the `N + 1` waypoints as interleaved `x, y` into `buf`
// (`len` counts doubles, at least `2 (N + 1)`).
//
// # Safety
// `report` must be a live handle; `buf` valid for `len` writes.
enum UrisStatus uris_report_waypoints(const struct UrisReport *report, double *buf, size_t len);

// Copies the zero-based user served in each of the `N` slots.
//
// # Safety
// `report` must be a live handle; `buf` valid for `len` writes.
enum UrisStatus uris_report_schedule(const struct UrisReport *report, uint32_t *buf, size_t len);

// Copies offloaded bits, local bits and server CPU frequency per user;
// each buffer holds `len >= K` values.
//
// # Safety
// `report` must be a live handle; every buffer valid for `len` writes.
enum UrisStatus uris_report_allocation(const struct UrisReport *report,
                                       double *l_offload,
                                       double *l_local,
                                       double *f_server,
                                       size_t len);

// Number of entries in the outer-loop objective trace.
//
// # Safety
// `report` must be a live handle; `out` valid for writes.
enum UrisStatus uris_report_trace_len(const struct UrisReport *report, size_t *out);

// # Safety
// `report` must be a live handle; `buf` valid for `len` writes.
enum UrisStatus uris_report_trace(const struct UrisReport *report, double *buf, size_t len);

// Full report as JSON; free the result with [`uris_string_free`].
//
// # Safety
// `report` must be a live handle; `out` valid for writes.
enum UrisStatus uris_report_to_json(const struct UrisReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* URIS_MEC_H */
