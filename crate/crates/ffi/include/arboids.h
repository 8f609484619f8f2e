/* C interface to the arboids target-defense laboratory. */

#ifndef ARBOIDS_H
#define ARBOIDS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define ARB_OK 0

// A required pointer was null or a length was wrong.
#define ARB_ERR_NULL 1

// Invalid configuration or argument.
#define ARB_ERR_CONFIG 2

// Filesystem or encoding failure.
#define ARB_ERR_IO 3

// Unreadable or inconsistent checkpoint.
#define ARB_ERR_CHECKPOINT 4

// Domain violation at runtime (e.g. stepping a finished episode).
#define ARB_ERR_RUNTIME 5

// Episode still running.
#define ARB_OUTCOME_LIVE 0

// A defender captured the attacker.
#define ARB_OUTCOME_CAPTURE 1

// Time expired with the target intact.
#define ARB_OUTCOME_TIMEOUT 2

// The attacker reached the protected circle.
#define ARB_OUTCOME_BREACH 3

// Two defenders collided.
#define ARB_OUTCOME_COLLISION 4

// Scripted flocking defender policy.
#define ARB_POLICY_BOIDS 0

// Scripted potential-field pursuit defender policy.
#define ARB_POLICY_APF 1

// Residual policy (learned action added to the heuristic).
#define ARB_POLICY_RP 2

// Plain SAC policy.
#define ARB_POLICY_VANILLA_SAC 3

// Adaptive-residual policy with a learned blend weight.
#define ARB_POLICY_ARBOIDS 4

// One engagement plus its RNG stream. Opaque.
typedef struct arb_env arb_env;

// A defender policy. Opaque.
typedef struct arb_policy arb_policy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent error on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *arb_last_error(void);

// Library version as a static NUL-terminated string.
const char *arb_version(void);

// Create an environment from a JSON run config (`"{}"` or NULL for the
// defaults) and seed its RNG. The first episode is reset and ready.
//
// # Safety
// `config_json` must be NULL or a NUL-terminated string; `out_env` must be a
// valid pointer. The returned handle must be freed with `arb_env_free`.
int32_t arb_env_new(const char *config_json, uint64_t seed, struct arb_env **out_env);

// Release an environment handle. NULL is ignored.
//
// # Safety
// `env` must be NULL or a handle from `arb_env_new` not yet freed.
void arb_env_free(struct arb_env *env);

// Reseed the RNG and start a fresh episode.
//
// # Safety
// `env` must be a live handle.
int32_t arb_env_reset(struct arb_env *env, uint64_t seed);

// Number of defenders in the engagement.
//
// # Safety
// `env` must be a live handle; `out` must be valid.
int32_t arb_env_num_defenders(const struct arb_env *env, uint32_t *out);

// Simulated seconds since episode start.
//
// # Safety
// `env` must be a live handle; `out` must be valid.
int32_t arb_env_time(const struct arb_env *env, double *out);

// Outcome of the current episode (`ARB_OUTCOME_LIVE` while running).
//
// # Safety
// `env` must be a live handle; `out` must be valid.
int32_t arb_env_outcome(const struct arb_env *env, int32_t *out);

// Number of doubles written by `arb_env_state`: 6 per defender plus 6 for
// the attacker, each vessel as (x, y, psi, u, v, r).
//
// # Safety
// `env` must be a live handle; `out` must be valid.
int32_t arb_env_state_size(const struct arb_env *env, uint32_t *out);

// Copy the flat vessel state (defenders in index order, then the attacker)
// into `out`, which holds `len` doubles (`len` must match
// `arb_env_state_size`).
//
// # Safety
// `env` must be a live handle; `out` must point to `len` doubles.
int32_t arb_env_state(const struct arb_env *env, double *out, uint32_t len);

// Number of doubles in one defender observation:
// 2 per teammate, 4 for the attacker/target block, 8 for the Boids block.
//
// # Safety
// `env` must be a live handle; `out` must be valid.
int32_t arb_env_observation_size(const struct arb_env *env, uint32_t *out);

// Build defender `i`'s observation on the current state. With `noise`
// nonzero, measurement noise is drawn from the environment RNG. Layout:
// teammates (bearing, distance each), then the attacker/target block, then
// the Boids block.
//
// # Safety
// `env` must be a live handle; `out` must point to `len` doubles matching
// `arb_env_observation_size`.
int32_t arb_env_observation(struct arb_env *env,
                            uint32_t defender,
                            int32_t noise,
                            double *out,
                            uint32_t len);

// Advance one decision interval. `actions` holds `2 * n_defenders` doubles
// (left, right per defender, each in [-1, 1]); the attacker runs the
// scripted potential-field policy from the config. Per-defender rewards are
// written to `rewards` (`n_defenders` doubles) and the episode outcome code
// to `out_outcome`.
//
// # Safety
// `env` must be a live handle; the buffers must match the documented sizes.
int32_t arb_env_step(struct arb_env *env,
                     const double *actions,
                     uint32_t actions_len,
                     double *rewards,
                     uint32_t rewards_len,
                     int32_t *out_outcome);

// Create a scripted policy (`ARB_POLICY_BOIDS` or `ARB_POLICY_APF`).
//
// # Safety
// `out_policy` must be valid; free the handle with `arb_policy_free`.
int32_t arb_policy_new_scripted(int32_t kind, struct arb_policy **out_policy);

// Load a trained policy from a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out_policy` must be valid; free
// the handle with `arb_policy_free`.
int32_t arb_policy_load(const char *path, struct arb_policy **out_policy);

// Release a policy handle. NULL is ignored.
//
// # Safety
// `policy` must be NULL or a live handle.
void arb_policy_free(struct arb_policy *policy);

// Policy kind code (`ARB_POLICY_*`).
//
// # Safety
// `policy` must be a live handle; `out` must be valid.
int32_t arb_policy_kind(const struct arb_policy *policy, int32_t *out);

// Greedy action of `policy` for defender `i` on the environment's current
// state. Writes (left, right) to `out_action`; if `out_theta` is non-NULL it
// receives the blend weight (1.0 for learned policies without one, -1.0 for
// scripted policies). With `noise` nonzero the learned-policy observation is
// drawn with measurement noise from the environment RNG.
//
// # Safety
// `env` and `policy` must be live handles; `out_action` must point to two
// doubles.
int32_t arb_policy_action(const struct arb_policy *policy,
                          struct arb_env *env,
                          uint32_t defender,
                          int32_t noise,
                          double *out_action,
                          double *out_theta);

// Play one fresh episode with `policy` defending against the scripted
// attacker, using the environment config and a new episode drawn from the
// environment RNG. Writes the outcome code, decision-step count, and
// simulated duration (any out-pointer may be NULL to skip it). The
// environment keeps its pre-call state.
//
// # Safety
// `env` and `policy` must be live handles.
int32_t arb_rollout(struct arb_env *env,
                    const struct arb_policy *policy,
                    int32_t *out_outcome,
                    uint32_t *out_steps,
                    double *out_duration);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARBOIDS_H */
