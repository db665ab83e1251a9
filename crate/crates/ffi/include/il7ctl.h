#ifndef IL7CTL_H
#define IL7CTL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Il7Status {
  IL7_STATUS_OK = 0,
  IL7_STATUS_INVALID_ARGUMENT = 1,
  IL7_STATUS_CONFIG = 2,
  IL7_STATUS_NO_EQUILIBRIUM = 3,
  IL7_STATUS_GRID_TOO_LARGE = 4,
  /**
   * The solve stopped at `max_iter`; the table is still returned.
   */
  IL7_STATUS_NOT_CONVERGED = 5,
  IL7_STATUS_HASH_MISMATCH = 6,
  IL7_STATUS_CORRUPT_TABLE = 7,
  IL7_STATUS_IO = 8,
  IL7_STATUS_PROTOCOL_VIOLATION = 9,
  IL7_STATUS_NULL_POINTER = 10,
  IL7_STATUS_PANIC = 11,
} Il7Status;

/**
 * Boundary reached by the flow, as returned by [`il7_time_to_boundary`].
 */
typedef enum Il7Boundary {
  IL7_BOUNDARY_XI1 = 1,
  IL7_BOUNDARY_XI2 = 2,
  IL7_BOUNDARY_XI3 = 3,
  IL7_BOUNDARY_XI4 = 4,
  IL7_BOUNDARY_XI5 = 5,
  IL7_BOUNDARY_INTERIOR = 0,
} Il7Boundary;

/**
 * A patient and model configuration with its solver and Monte Carlo options.
 */
typedef struct Il7Model Il7Model;

/**
 * A value table computed for one model.
 */
typedef struct Il7Table Il7Table;

/**
 * `(gamma, n, sigma, theta, p, r)`; `gamma == 0` is the absorbing state.
 */
typedef struct Il7State {
  uint32_t gamma;
  uint32_t n;
  double sigma;
  double theta;
  double p;
  double r;
} Il7State;

typedef struct Il7McSummary {
  size_t n_runs;
  double mean_cost;
  double std_cost;
  double min_cost;
  double mean_cd4;
  double mean_days_under;
  double mean_injections;
} Il7McSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on the calling thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *il7_last_error(void);

/**
 * Parse a run configuration from TOML text. Relative output paths resolve
 * against the current directory.
 *
 * # Safety
 * `toml` must be a nul-terminated string and `out` a valid pointer.
 */
enum Il7Status il7_model_from_toml(const char *toml, struct Il7Model **out_model);

/**
 * Read a run configuration file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum Il7Status il7_model_from_file(const char *path, struct Il7Model **out_model);

/**
 * # Safety
 * `model` must come from `il7_model_from_*` and not be used afterwards.
 */
void il7_model_free(struct Il7Model *model);

/**
 * Initial state of the patient.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Il7Status il7_initial_state(const struct Il7Model *model, struct Il7State *out_state);

/**
 * Deterministic flow of `state` for `t` days.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Il7Status il7_flow(const struct Il7Model *model,
                        const struct Il7State *state,
                        double t,
                        struct Il7State *out_state);

/**
 * Time until the flow from `state` hits the active boundary, and which one.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Il7Status il7_time_to_boundary(const struct Il7Model *model,
                                    const struct Il7State *state,
                                    double *out_time,
                                    enum Il7Boundary *out_boundary);

/**
 * Run value iteration with the solver options of the configuration.
 * Returns [`Il7Status::NotConverged`] together with the last iterate when
 * `max_iter` was reached. `out_iterations` and `out_residual` may be null.
 *
 * # Safety
 * `model` and `out_table` must be valid; the others valid or null.
 */
enum Il7Status il7_solve(const struct Il7Model *model,
                         struct Il7Table **out_table,
                         size_t *out_iterations,
                         double *out_residual);

/**
 * Load a value table computed for `model`.
 *
 * # Safety
 * Pointers must be valid; `path` nul-terminated.
 */
enum Il7Status il7_table_load(const struct Il7Model *model,
                              const char *path,
                              struct Il7Table **out_table);

/**
 * Write a value table; nonzero `single_precision` stores 32-bit values.
 *
 * # Safety
 * Pointers must be valid; `path` nul-terminated.
 */
enum Il7Status il7_table_save(const struct Il7Table *table, const char *path, int single_precision);

/**
 * Interpolated value at `state`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Il7Status il7_table_value(const struct Il7Table *table,
                               const struct Il7State *state,
                               double *out_value);

/**
 * # Safety
 * `table` must come from `il7_solve` or `il7_table_load` and not be used afterwards.
 */
void il7_table_free(struct Il7Table *table);

/**
 * Optimal dose (µg/kg, 0 for skipping) at a decision boundary.
 *
 * # Safety
 * Pointers must be valid.
 */
enum Il7Status il7_optimal_dose(const struct Il7Model *model,
                                const struct Il7Table *table,
                                const struct Il7State *state,
                                double *out_dose);

/**
 * Monte Carlo evaluation of a protocol (`"optimal"`, a named fixed protocol
 * or `"custom:..."`). `table` may be null unless the protocol is `"optimal"`.
 *
 * # Safety
 * `model`, `protocol` and `out_summary` must be valid; `table` valid or null.
 */
enum Il7Status il7_monte_carlo(const struct Il7Model *model,
                               const struct Il7Table *table,
                               const char *protocol,
                               size_t n_runs,
                               uint64_t seed,
                               struct Il7McSummary *out_summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IL7CTL_H */
