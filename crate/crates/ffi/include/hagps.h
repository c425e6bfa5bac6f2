#ifndef HAGPS_H
#define HAGPS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every exported function.
 */
typedef enum HagpsStatus {
  HAGPS_STATUS_OK = 0,
  HAGPS_STATUS_NULL_ARGUMENT = 1,
  HAGPS_STATUS_INVALID_UTF8 = 2,
  HAGPS_STATUS_CONFIG = 3,
  HAGPS_STATUS_IO = 4,
  HAGPS_STATUS_CHECKPOINT = 5,
  HAGPS_STATUS_SHAPE_MISMATCH = 6,
  HAGPS_STATUS_BUFFER_TOO_SMALL = 7,
  HAGPS_STATUS_EPISODE = 8,
  HAGPS_STATUS_INTERNAL = 9,
  HAGPS_STATUS_PANIC = 10,
} HagpsStatus;

/*
 A demand-replay environment.
 */
typedef struct HagpsEnv HagpsEnv;

/*
 A trained group tree loaded from a checkpoint.
 */
typedef struct HagpsPolicy HagpsPolicy;

/*
 Metrics of a greedy episode.
 */
typedef struct HagpsEval {
  double service_ratio;
  uint64_t rebalanced;
  double mean_reward;
  uintptr_t steps;
} HagpsEval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer is
 valid until the next failing call on the same thread.
 */
const char *hagps_last_error(void);

/*
 Build an environment from a TOML run configuration (its `data` and `env`
 sections).

 # Safety
 `config_toml` must be a valid C string and `out` a valid pointer.
 */
enum HagpsStatus hagps_env_new(const char *config_toml, struct HagpsEnv **out);

/*
 # Safety
 `env` must come from [`hagps_env_new`] and not be used afterwards.
 */
void hagps_env_free(struct HagpsEnv *env);

/*
 Number of agents (regions).

 # Safety
 `env` must be a live handle.
 */
uintptr_t hagps_env_agents(const struct HagpsEnv *env);

/*
 Nonzero once the horizon is reached.

 # Safety
 `env` must be a live handle.
 */
int32_t hagps_env_done(const struct HagpsEnv *env);

/*
 Restore the initial inventory and time.

 # Safety
 `env` must be a live handle.
 */
enum HagpsStatus hagps_env_reset(struct HagpsEnv *env);

/*
 Copy the current inventory into `out` (`len` ≥ agents).

 # Safety
 `env` must be a live handle and `out` must hold `len` values.
 */
enum HagpsStatus hagps_env_inventory(const struct HagpsEnv *env, uint32_t *out, uintptr_t len);

/*
 Advance one interval. `actions` holds four outflows (N, S, E, W) per
 agent; per-agent rewards are written to `rewards`.

 # Safety
 `env` must be a live handle, `actions` must hold `actions_len` values and
 `rewards` must hold `rewards_len` values.
 */
enum HagpsStatus hagps_env_step(struct HagpsEnv *env,
                                const uint32_t *actions,
                                uintptr_t actions_len,
                                double *rewards,
                                uintptr_t rewards_len);

/*
 Load a trained policy.

 # Safety
 `path` must be a valid C string and `out` a valid pointer.
 */
enum HagpsStatus hagps_policy_load(const char *path, struct HagpsPolicy **out);

/*
 # Safety
 `policy` must come from [`hagps_policy_load`] and not be used afterwards.
 */
void hagps_policy_free(struct HagpsPolicy *policy);

/*
 Greedy joint action for the current state, four outflows per agent.

 # Safety
 Both handles must be live and `out` must hold `len` values.
 */
enum HagpsStatus hagps_policy_act(const struct HagpsPolicy *policy,
                                  const struct HagpsEnv *env,
                                  uint32_t *out,
                                  uintptr_t len);

/*
 Play a full greedy episode from the initial state. The environment handle
 is left untouched.

 # Safety
 Both handles must be live and `out` must be a valid pointer.
 */
enum HagpsStatus hagps_policy_evaluate(const struct HagpsPolicy *policy,
                                       const struct HagpsEnv *env,
                                       struct HagpsEval *out);

/*
 Run a full training job described by a TOML configuration (which must set
 `out`) and report the final greedy evaluation.

 # Safety
 `config_toml` must be a valid C string and `out` a valid pointer.
 */
enum HagpsStatus hagps_train(const char *config_toml, struct HagpsEval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAGPS_H */
