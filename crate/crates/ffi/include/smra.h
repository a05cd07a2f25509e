#ifndef SMRA_H
#define SMRA_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SmraStatus {
  SMRA_STATUS_OK = 0,
  SMRA_STATUS_NULL_POINTER = 1,
  SMRA_STATUS_INVALID_ARGUMENT = 2,
  SMRA_STATUS_ORACLE_TOO_LARGE = 3,
  SMRA_STATUS_INTERNAL = 4,
  SMRA_STATUS_PANIC = 5,
} SmraStatus;

/**
 * Opaque scenario handle.
 */
typedef struct SmraScenario SmraScenario;

/**
 * Opaque handle to the results of a batch of trials.
 */
typedef struct SmraTrialStats SmraTrialStats;

/**
 * Parameters for [`smra_scenario_builtin`]. Zero leaves a parameter at its
 * default; a null `partition` likewise.
 */
typedef struct SmraBuiltinParams {
  int64_t big_m;
  int64_t k;
  int64_t n;
  int64_t alpha;
  int64_t h;
  int64_t l;
  /**
   * Parts for `scripted_partition`, e.g. `"0,1;2"`.
   */
  const char *partition;
} SmraBuiltinParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *smra_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string obtained from this library, freed once.
 */
void smra_string_free(char *s);

/**
 * Parses a scenario from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SmraStatus smra_scenario_from_json(const char *json, struct SmraScenario **out);

/**
 * Builds a named built-in scenario.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `params` null or valid, `out`
 * writable.
 */
enum SmraStatus smra_scenario_builtin(const char *name,
                                      const struct SmraBuiltinParams *params,
                                      struct SmraScenario **out);

/**
 * Serializes a scenario to JSON.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_scenario_to_json(const struct SmraScenario *scenario, char **out);

/**
 * Number of items in the scenario, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t smra_scenario_items(const struct SmraScenario *scenario);

/**
 * Number of bidders in the scenario, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t smra_scenario_bidders(const struct SmraScenario *scenario);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must be null or a handle from this library, freed once.
 */
void smra_scenario_free(struct SmraScenario *scenario);

/**
 * Optimal welfare and an optimal assignment as JSON.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_oracle_json(const struct SmraScenario *scenario, char **out);

/**
 * Degree of submodularity of a valuation given as JSON.
 *
 * # Safety
 * `valuation_json` must be a NUL-terminated string; `out` must be writable.
 */
enum SmraStatus smra_analyze_json(const char *valuation_json, char **out);

/**
 * Runs `trials` independent auctions. `jobs` 0 or 1 runs serially;
 * `max_rounds` 0 uses the default cap.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_run_trials(const struct SmraScenario *scenario,
                                size_t trials,
                                uint64_t seed,
                                size_t jobs,
                                size_t max_rounds,
                                struct SmraTrialStats **out);

/**
 * Releases trial results. Null is ignored.
 *
 * # Safety
 * `stats` must be null or a handle from this library, freed once.
 */
void smra_stats_free(struct SmraTrialStats *stats);

/**
 * Number of trials, or 0 for a null handle.
 *
 * # Safety
 * `stats` must be null or a live handle.
 */
size_t smra_stats_trials(const struct SmraTrialStats *stats);

/**
 * Optimal welfare of the scenario.
 *
 * # Safety
 * `stats` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_stats_optimal(const struct SmraTrialStats *stats, int64_t *out);

/**
 * Welfare and round count of one trial. Either out-pointer may be null.
 *
 * # Safety
 * `stats` must be a live handle; non-null out-pointers must be writable.
 */
enum SmraStatus smra_stats_trial(const struct SmraTrialStats *stats,
                                 size_t index,
                                 int64_t *welfare,
                                 size_t *rounds);

/**
 * Fraction of trials in which the named event held.
 *
 * # Safety
 * `stats` must be a live handle, `event` a NUL-terminated string, `out`
 * writable.
 */
enum SmraStatus smra_stats_event_frequency(const struct SmraTrialStats *stats,
                                           const char *event,
                                           double *out);

/**
 * One CSV row per trial, with a header line.
 *
 * # Safety
 * `stats` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_stats_to_csv(const struct SmraTrialStats *stats, char **out);

/**
 * Aggregate summary as JSON.
 *
 * # Safety
 * `stats` must be a live handle; `out` must be writable.
 */
enum SmraStatus smra_stats_summary_json(const struct SmraTrialStats *stats, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMRA_H */
