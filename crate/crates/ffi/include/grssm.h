#ifndef GRSSM_H
#define GRSSM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrssmStatus {
  GRSSM_STATUS_OK = 0,
  GRSSM_STATUS_NULL_POINTER = 1,
  GRSSM_STATUS_INVALID_ARGUMENT = 2,
  GRSSM_STATUS_CONFIG = 3,
  GRSSM_STATUS_IO = 4,
  /**
   * Unreadable artifact: version, truncation, checksum or structure.
   */
  GRSSM_STATUS_FORMAT = 5,
  GRSSM_STATUS_DIVERGENCE = 6,
  GRSSM_STATUS_UNKNOWN_NAME = 7,
  /**
   * Output buffer length does not match the required size.
   */
  GRSSM_STATUS_BUFFER_SIZE = 8,
  GRSSM_STATUS_PANIC = 9,
} GrssmStatus;

/**
 * Simulator episode.
 */
typedef struct GrssmEnv GrssmEnv;

/**
 * A cluster-head policy with its own random stream.
 */
typedef struct GrssmPolicy GrssmPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *grssm_version(void);

/**
 * Length in bytes of the calling thread's last error message, without the
 * terminating NUL. Zero after a successful call.
 */
size_t grssm_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null with `len == 0`.
 */
size_t grssm_last_error_message(char *buf, size_t len);

/**
 * Creates an episode of the named catalog scenario (or TOML file path) with
 * newline-separated `key=value` overrides (may be null). With
 * `full_horizon` non-zero the episode runs past terminal steps.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_env` must be writable.
 */
enum GrssmStatus grssm_env_new(const char *scenario,
                               const char *overrides,
                               uint64_t seed,
                               uint8_t full_horizon,
                               struct GrssmEnv **out_env);

/**
 * # Safety
 * `env` must come from [`grssm_env_new`] and not be used afterwards.
 */
void grssm_env_free(struct GrssmEnv *env);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GrssmStatus grssm_env_num_nodes(const struct GrssmEnv *env, size_t *out_n);

/**
 * Steps completed so far and whether the episode has finished.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GrssmStatus grssm_env_progress(const struct GrssmEnv *env,
                                    size_t *out_steps,
                                    uint8_t *out_done);

/**
 * Applies one CH vector (`n` bytes, 0 or 1).
 *
 * # Safety
 * `actions` must hold `n` bytes; out-pointers must be valid.
 */
enum GrssmStatus grssm_env_step(struct GrssmEnv *env,
                                const uint8_t *actions,
                                size_t n,
                                double *out_reward,
                                uint8_t *out_continue,
                                uint8_t *out_done);

/**
 * Fraction of alive nodes covered by a CH in the current snapshot.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GrssmStatus grssm_env_connectivity(const struct GrssmEnv *env, double *out_ratio);

/**
 * Copies per-node state: `positions` holds `2n` values (x, y pairs); the
 * other buffers hold `n`. Any buffer may be null to skip it.
 *
 * # Safety
 * Non-null buffers must have the stated lengths.
 */
enum GrssmStatus grssm_env_nodes(const struct GrssmEnv *env,
                                 size_t n,
                                 double *positions,
                                 double *energy,
                                 uint8_t *alive,
                                 uint8_t *ch);

/**
 * Row-major `n x n` adjacency of the current snapshot.
 *
 * # Safety
 * `out_adj` must hold `len` bytes.
 */
enum GrssmStatus grssm_env_adjacency(const struct GrssmEnv *env, uint8_t *out_adj, size_t len);

/**
 * Baseline by name (`lowest_id`, `wca`, `leach`, `heed`, `dmac`, `random`)
 * with default hyperparameters. `e_init` is the scenario's initial energy.
 *
 * # Safety
 * `name` must be NUL-terminated; `out_policy` writable.
 */
enum GrssmStatus grssm_policy_baseline(const char *name,
                                       double e_init,
                                       uint64_t seed,
                                       struct GrssmPolicy **out_policy);

/**
 * Trained world-model policy from its two checkpoints. Features are
 * normalised with the constants of `env`'s scenario.
 *
 * # Safety
 * Paths must be NUL-terminated; `env` valid; `out_policy` writable.
 */
enum GrssmStatus grssm_policy_load(const char *wm_path,
                                   const char *policy_path,
                                   const struct GrssmEnv *env,
                                   uint8_t greedy,
                                   uint64_t seed,
                                   struct GrssmPolicy **out_policy);

/**
 * # Safety
 * `policy` must come from a `grssm_policy_*` constructor.
 */
void grssm_policy_free(struct GrssmPolicy *policy);

/**
 * Clears per-episode memory.
 *
 * # Safety
 * `policy` must be valid.
 */
enum GrssmStatus grssm_policy_reset(struct GrssmPolicy *policy);

/**
 * Writes the CH vector the policy picks for `env`'s current snapshot.
 *
 * # Safety
 * `out_actions` must hold `n` bytes.
 */
enum GrssmStatus grssm_policy_act(struct GrssmPolicy *policy,
                                  const struct GrssmEnv *env,
                                  uint8_t *out_actions,
                                  size_t n);

/**
 * Jain fairness index of `n` values.
 *
 * # Safety
 * `values` must hold `n` doubles.
 */
enum GrssmStatus grssm_jain_index(const double *values, size_t n, double *out_index);

/**
 * Total Hamming churn of `steps` consecutive CH vectors of `n` nodes,
 * stored row-major.
 *
 * # Safety
 * `actions` must hold `steps * n` bytes.
 */
enum GrssmStatus grssm_ch_change_count(const uint8_t *actions,
                                       size_t steps,
                                       size_t n,
                                       uint64_t *out_count);

/**
 * Two-sided Wilcoxon signed-rank test of `n` paired samples.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles.
 */
enum GrssmStatus grssm_wilcoxon(const double *a,
                                const double *b,
                                size_t n,
                                double *out_statistic,
                                double *out_p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRSSM_H */
