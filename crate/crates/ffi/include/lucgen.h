#ifndef LUCGEN_H
#define LUCGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum LucgenStatus {
  LUCGEN_STATUS_OK = 0,
  LUCGEN_STATUS_NULL_POINTER = 1,
  LUCGEN_STATUS_INVALID_ARGUMENT = 2,
  LUCGEN_STATUS_DIMENSION = 3,
  LUCGEN_STATUS_IO = 4,
  LUCGEN_STATUS_DATA = 5,
  LUCGEN_STATUS_CONFIG = 6,
  LUCGEN_STATUS_NUMERIC = 7,
  LUCGEN_STATUS_PANIC = 8,
} LucgenStatus;

/**
 * Generator half of a trained adversarial planner.
 */
typedef struct LucgenGenerator LucgenGenerator;

/**
 * Land-use configuration: `m` channels over an `n × n` grid.
 */
typedef struct LucgenPlan LucgenPlan;

/**
 * Trained random-forest scoring model.
 */
typedef struct LucgenScorer LucgenScorer;

/**
 * Library version as a static NUL-terminated string.
 */
const char *lucgen_version(void);

/**
 * Message of the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *lucgen_last_error(void);

void lucgen_clear_last_error(void);

/**
 * Harmonic quality score of a check-in frequency and a diversity, both in `[0, 1]`.
 *
 * # Safety
 * `q_out` must be null or point to writable memory for one `double`.
 */
enum LucgenStatus lucgen_quality(double freq, double div, double *q_out);

/**
 * Empty plan with `m` channels on an `n × n` grid.
 *
 * # Safety
 * `out` must be null or point to writable memory for one handle.
 */
enum LucgenStatus lucgen_plan_new(size_t m, size_t n, struct LucgenPlan **out);

/**
 * Plan from `m·n·n` row-major values laid out as `[channel][row][col]`.
 *
 * # Safety
 * `data` must point to `len` readable doubles; `out` as in [`lucgen_plan_new`].
 */
enum LucgenStatus lucgen_plan_from_data(size_t m,
                                        size_t n,
                                        const double *data,
                                        size_t len,
                                        struct LucgenPlan **out);

/**
 * # Safety
 * `plan` must be null or a handle returned by this library and not yet freed.
 */
void lucgen_plan_free(struct LucgenPlan *plan);

/**
 * # Safety
 * `plan` must be a live handle; `m_out` and `n_out` writable.
 */
enum LucgenStatus lucgen_plan_shape(const struct LucgenPlan *plan, size_t *m_out, size_t *n_out);

/**
 * # Safety
 * `plan` must be a live handle; `value_out` writable.
 */
enum LucgenStatus lucgen_plan_get(const struct LucgenPlan *plan,
                                  size_t channel,
                                  size_t row,
                                  size_t col,
                                  double *value_out);

/**
 * Adds `value` (finite, non-negative) to one cell.
 *
 * # Safety
 * `plan` must be a live handle.
 */
enum LucgenStatus lucgen_plan_add(struct LucgenPlan *plan,
                                  size_t channel,
                                  size_t row,
                                  size_t col,
                                  double value);

/**
 * Copies all `m·n·n` values into `buf`, which holds `cap` doubles.
 *
 * # Safety
 * `plan` must be a live handle; `buf` must hold `cap` writable doubles.
 */
enum LucgenStatus lucgen_plan_copy_data(const struct LucgenPlan *plan, double *buf, size_t cap);

/**
 * Entropy-based diversity of the channel totals, in `[0, 1]`.
 *
 * # Safety
 * `plan` must be a live handle; `div_out` writable.
 */
enum LucgenStatus lucgen_plan_diversity(const struct LucgenPlan *plan, double *div_out);

/**
 * Share of each channel in the plan total; writes `m` values.
 *
 * # Safety
 * `plan` must be a live handle; `buf` must hold `cap` writable doubles.
 */
enum LucgenStatus lucgen_plan_proportions(const struct LucgenPlan *plan, double *buf, size_t cap);

/**
 * Dominant channel per cell, row-major, `-1` for empty cells; writes `n·n` values.
 *
 * # Safety
 * `plan` must be a live handle; `buf` must hold `cap` writable ints.
 */
enum LucgenStatus lucgen_plan_dominant(const struct LucgenPlan *plan, int *buf, size_t cap);

/**
 * Writes the merged category map as a binary PPM with `scale` pixels per cell.
 *
 * # Safety
 * `plan` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum LucgenStatus lucgen_plan_write_ppm(const struct LucgenPlan *plan,
                                        const char *path,
                                        size_t scale);

/**
 * Loads a scoring model saved by the `score` stage.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum LucgenStatus lucgen_scorer_load(const char *path, struct LucgenScorer **out);

/**
 * # Safety
 * `scorer` must be null or a live handle.
 */
void lucgen_scorer_free(struct LucgenScorer *scorer);

/**
 * Probability in `[0, 1]` that the plan is an excellent configuration.
 *
 * # Safety
 * `scorer` and `plan` must be live handles; `score_out` writable.
 */
enum LucgenStatus lucgen_scorer_score(const struct LucgenScorer *scorer,
                                      const struct LucgenPlan *plan,
                                      double *score_out);

/**
 * Loads the generator from a planner checkpoint written by `train-gan`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum LucgenStatus lucgen_generator_load(const char *path, struct LucgenGenerator **out);

/**
 * # Safety
 * `generator` must be null or a live handle.
 */
void lucgen_generator_free(struct LucgenGenerator *generator);

/**
 * Input width plus output shape: latent length, channels `m`, resolution `n`.
 *
 * # Safety
 * `generator` must be a live handle; all outputs writable.
 */
enum LucgenStatus lucgen_generator_shape(const struct LucgenGenerator *generator,
                                         size_t *latent_out,
                                         size_t *m_out,
                                         size_t *n_out);

/**
 * Maps one latent vector (context embedding plus noise) to a new plan.
 *
 * # Safety
 * `generator` must be a live handle; `z` must hold `len` doubles; `out` writable.
 */
enum LucgenStatus lucgen_generator_generate(const struct LucgenGenerator *generator,
                                            const double *z,
                                            size_t len,
                                            struct LucgenPlan **out);

/**
 * Runs the command-line tool in-process and returns its exit status.
 * `argv[0]` is the program name, as for `main`.
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings.
 */
int lucgen_cli_run(int argc, const char *const *argv);

#endif  /* LUCGEN_H */
