#ifndef CCFAIR_H
#define CCFAIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CcfStatus {
  CCF_STATUS_OK = 0,
  CCF_STATUS_NULL_POINTER = 1,
  CCF_STATUS_INVALID_ARGUMENT = 2,
  CCF_STATUS_VALIDATION = 3,
  CCF_STATUS_PARSE = 4,
  CCF_STATUS_NON_FINITE = 5,
  CCF_STATUS_INDEX_OUT_OF_RANGE = 6,
  CCF_STATUS_INFEASIBLE = 7,
  CCF_STATUS_TOO_LARGE = 8,
  CCF_STATUS_SOLVER = 9,
  CCF_STATUS_IO = 10,
  CCF_STATUS_BUFFER_TOO_SMALL = 11,
  CCF_STATUS_PANIC = 12,
} CcfStatus;

/**
 * Opaque solver result.
 */
typedef struct CcfReport CcfReport;

/**
 * Opaque network layout.
 */
typedef struct CcfScenario CcfScenario;

/**
 * Summary numbers of a solver run. Capacities are in bits.
 */
typedef struct CcfMetrics {
  double fairness_index;
  double c_sum;
  double c_min;
  double objective;
  double wall_time;
  /**
   * Solver case, 1 to 4.
   */
  uint32_t case_id;
  size_t num_users;
  size_t num_subnetworks;
} CcfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if the last
 * call succeeded. The pointer stays valid until the next call into the
 * library from the same thread.
 */
const char *ccf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccf_version(void);

/**
 * Draws a random layout in the unit square.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum CcfStatus ccf_scenario_generate(size_t k_users,
                                     size_t l_bs,
                                     double alpha0,
                                     double snr,
                                     uint64_t seed,
                                     struct CcfScenario **out);

/**
 * Reads a scenario file written by [`ccf_scenario_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CcfStatus ccf_scenario_load(const char *path, struct CcfScenario **out);

/**
 * # Safety
 * `scenario` must come from this library; `path` must be NUL-terminated.
 */
enum CcfStatus ccf_scenario_save(const struct CcfScenario *scenario, const char *path);

/**
 * Writes the number of users and base stations.
 *
 * # Safety
 * `scenario` must come from this library; the outputs must be valid.
 */
enum CcfStatus ccf_scenario_dims(const struct CcfScenario *scenario, size_t *k_users, size_t *l_bs);

/**
 * # Safety
 * `scenario` must be null or come from this library, and not be used again.
 */
void ccf_scenario_free(struct CcfScenario *scenario);

/**
 * Case (1 to 4) of a fairness parameter such as `"3"`, `"1/2"` or `"inf"`.
 *
 * # Safety
 * `alpha` must be NUL-terminated and `case_id` valid.
 */
enum CcfStatus ccf_classify_alpha(const char *alpha, uint32_t *case_id);

/**
 * Partitions the base stations into `m` groups and runs the solver chosen
 * by `alpha`.
 *
 * `solver_toml` may be null for the default settings, or hold solver
 * fields in TOML (for example `"t_a = 500"`). The seed drives both the
 * partition and the solver.
 *
 * # Safety
 * `scenario` must come from this library, `alpha` must be NUL-terminated,
 * `solver_toml` null or NUL-terminated, and `out` valid.
 */
enum CcfStatus ccf_solve(const struct CcfScenario *scenario,
                         size_t m,
                         const char *alpha,
                         const char *solver_toml,
                         uint64_t seed,
                         struct CcfReport **out);

/**
 * # Safety
 * `report` must come from this library and `out` be valid.
 */
enum CcfStatus ccf_report_metrics(const struct CcfReport *report, struct CcfMetrics *out);

/**
 * Copies the subnetwork index (0-based) of every user into `buf`, which
 * must hold at least `num_users` entries.
 *
 * # Safety
 * `report` must come from this library and `buf` point to `len` writable
 * entries.
 */
enum CcfStatus ccf_report_user_assignment(const struct CcfReport *report, size_t *buf, size_t len);

/**
 * Copies the per-subnetwork capacities in bits into `buf`.
 *
 * # Safety
 * `report` must come from this library and `buf` point to `len` writable
 * entries.
 */
enum CcfStatus ccf_report_capacities(const struct CcfReport *report, double *buf, size_t len);

/**
 * # Safety
 * `report` must be null or come from this library, and not be used again.
 */
void ccf_report_free(struct CcfReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCFAIR_H */
