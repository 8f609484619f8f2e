//! C ABI over the target-defense laboratory: opaque environment and policy
//! handles, integer status codes, and a thread-local last-error message.
//!
//! Every fallible function returns a status code (`ARB_OK` on success) and
//! reports results through out-pointers. Handles must be released with their
//! `_free` function; passing null anywhere yields `ARB_ERR_NULL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use arboids::apf::apf_action;
use arboids::boids::NormalizedAction;
use arboids::config::{parse_config_str, RunConfig};
use arboids::env::{
    compute_observation, defender_boids, reset, step, EngagementState, EpisodeOutcome,
};
use arboids::error::Error;
use arboids::eval::{run_episode, AttackerPolicy, DefenderPolicy};
use arboids::geom::Vec2;
use arboids::sac::{flatten_defender_obs, FlatObs, Learner, Mode, PolicyKind};

/// Success.
pub const ARB_OK: i32 = 0;
/// A required pointer was null or a length was wrong.
pub const ARB_ERR_NULL: i32 = 1;
/// Invalid configuration or argument.
pub const ARB_ERR_CONFIG: i32 = 2;
/// Filesystem or encoding failure.
pub const ARB_ERR_IO: i32 = 3;
/// Unreadable or inconsistent checkpoint.
pub const ARB_ERR_CHECKPOINT: i32 = 4;
/// Domain violation at runtime (e.g. stepping a finished episode).
pub const ARB_ERR_RUNTIME: i32 = 5;

/// Episode still running.
pub const ARB_OUTCOME_LIVE: i32 = 0;
/// A defender captured the attacker.
pub const ARB_OUTCOME_CAPTURE: i32 = 1;
/// Time expired with the target intact.
pub const ARB_OUTCOME_TIMEOUT: i32 = 2;
/// The attacker reached the protected circle.
pub const ARB_OUTCOME_BREACH: i32 = 3;
/// Two defenders collided.
pub const ARB_OUTCOME_COLLISION: i32 = 4;

/// Scripted flocking defender policy.
pub const ARB_POLICY_BOIDS: i32 = 0;
/// Scripted potential-field pursuit defender policy.
pub const ARB_POLICY_APF: i32 = 1;
/// Residual policy (learned action added to the heuristic).
pub const ARB_POLICY_RP: i32 = 2;
/// Plain SAC policy.
pub const ARB_POLICY_VANILLA_SAC: i32 = 3;
/// Adaptive-residual policy with a learned blend weight.
pub const ARB_POLICY_ARBOIDS: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn code_of(err: &Error) -> i32 {
    err.exit_code()
}

fn fail(err: Error) -> i32 {
    set_last_error(&err.to_string());
    code_of(&err)
}

fn fail_null(what: &str) -> i32 {
    set_last_error(&format!("null pointer or bad length: {what}"));
    ARB_ERR_NULL
}

fn guarded(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_last_error("internal panic");
            ARB_ERR_RUNTIME
        }
    }
}

/// Message for the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn arb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn arb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// One engagement plus its RNG stream. Opaque.
pub struct ArbEnv {
    cfg: RunConfig,
    state: EngagementState,
    rng: ChaCha8Rng,
}

enum PolicyImpl {
    Boids,
    Apf,
    Learned(Box<Learner<f32>>),
}

/// A defender policy. Opaque.
pub struct ArbPolicy {
    inner: PolicyImpl,
}

impl ArbPolicy {
    fn kind_code(&self) -> i32 {
        match &self.inner {
            PolicyImpl::Boids => ARB_POLICY_BOIDS,
            PolicyImpl::Apf => ARB_POLICY_APF,
            PolicyImpl::Learned(l) => match l.kind {
                PolicyKind::Rp => ARB_POLICY_RP,
                PolicyKind::VanillaSac => ARB_POLICY_VANILLA_SAC,
                PolicyKind::Arboids => ARB_POLICY_ARBOIDS,
            },
        }
    }

    fn as_defender<'a>(&'a self, cfg: &'a RunConfig) -> DefenderPolicy<'a> {
        match &self.inner {
            PolicyImpl::Boids => DefenderPolicy::Boids,
            PolicyImpl::Apf => DefenderPolicy::Apf(&cfg.apf),
            PolicyImpl::Learned(l) => DefenderPolicy::Learned(l.as_ref()),
        }
    }
}

fn outcome_code(outcome: Option<EpisodeOutcome>) -> i32 {
    match outcome {
        None => ARB_OUTCOME_LIVE,
        Some(EpisodeOutcome::CaptureSuccess { .. }) => ARB_OUTCOME_CAPTURE,
        Some(EpisodeOutcome::TimeoutSuccess) => ARB_OUTCOME_TIMEOUT,
        Some(EpisodeOutcome::BreachFailure) => ARB_OUTCOME_BREACH,
        Some(EpisodeOutcome::CollisionFailure { .. }) => ARB_OUTCOME_COLLISION,
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        return Err(fail_null("string argument"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8");
        ARB_ERR_IO
    })
}

/// Create an environment from a JSON run config (`"{}"` or NULL for the
/// defaults) and seed its RNG. The first episode is reset and ready.
///
/// # Safety
/// `config_json` must be NULL or a NUL-terminated string; `out_env` must be a
/// valid pointer. The returned handle must be freed with `arb_env_free`.
#[no_mangle]
pub unsafe extern "C" fn arb_env_new(
    config_json: *const c_char,
    seed: u64,
    out_env: *mut *mut ArbEnv,
) -> i32 {
    guarded(|| {
        if out_env.is_null() {
            return fail_null("out_env");
        }
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = match cstr(config_json) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let text = if text.trim().is_empty() { "{}" } else { text };
            match parse_config_str(text) {
                Ok(c) => c,
                Err(e) => return fail(e),
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = match reset(&cfg.engagement, &mut rng) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        *out_env = Box::into_raw(Box::new(ArbEnv { cfg, state, rng }));
        ARB_OK
    })
}

/// Release an environment handle. NULL is ignored.
///
/// # Safety
/// `env` must be NULL or a handle from `arb_env_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn arb_env_free(env: *mut ArbEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Reseed the RNG and start a fresh episode.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn arb_env_reset(env: *mut ArbEnv, seed: u64) -> i32 {
    guarded(|| {
        let Some(env) = env.as_mut() else {
            return fail_null("env");
        };
        env.rng = ChaCha8Rng::seed_from_u64(seed);
        match reset(&env.cfg.engagement, &mut env.rng) {
            Ok(s) => {
                env.state = s;
                ARB_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of defenders in the engagement.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_env_num_defenders(env: *const ArbEnv, out: *mut u32) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = env.cfg.engagement.n_defenders as u32;
        ARB_OK
    })
}

/// Simulated seconds since episode start.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_env_time(env: *const ArbEnv, out: *mut f64) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = env.state.t;
        ARB_OK
    })
}

/// Outcome of the current episode (`ARB_OUTCOME_LIVE` while running).
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_env_outcome(env: *const ArbEnv, out: *mut i32) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = outcome_code(env.state.terminal);
        ARB_OK
    })
}

/// Number of doubles written by `arb_env_state`: 6 per defender plus 6 for
/// the attacker, each vessel as (x, y, psi, u, v, r).
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_env_state_size(env: *const ArbEnv, out: *mut u32) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = 6 * (env.cfg.engagement.n_defenders as u32 + 1);
        ARB_OK
    })
}

/// Copy the flat vessel state (defenders in index order, then the attacker)
/// into `out`, which holds `len` doubles (`len` must match
/// `arb_env_state_size`).
///
/// # Safety
/// `env` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn arb_env_state(env: *const ArbEnv, out: *mut f64, len: u32) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        let need = 6 * (env.cfg.engagement.n_defenders + 1);
        if out.is_null() || len as usize != need {
            return fail_null("state buffer");
        }
        let buf = std::slice::from_raw_parts_mut(out, need);
        for (k, vessel) in env
            .state
            .defenders
            .iter()
            .chain(std::iter::once(&env.state.attacker))
            .enumerate()
        {
            buf[6 * k..6 * k + 6]
                .copy_from_slice(&[vessel.x, vessel.y, vessel.psi, vessel.u, vessel.v, vessel.r]);
        }
        ARB_OK
    })
}

/// Number of doubles in one defender observation:
/// 2 per teammate, 4 for the attacker/target block, 8 for the Boids block.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_env_observation_size(env: *const ArbEnv, out: *mut u32) -> i32 {
    guarded(|| {
        let Some(env) = env.as_ref() else {
            return fail_null("env");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = 2 * (env.cfg.engagement.n_defenders as u32 - 1) + 12;
        ARB_OK
    })
}

/// Build defender `i`'s observation on the current state. With `noise`
/// nonzero, measurement noise is drawn from the environment RNG. Layout:
/// teammates (bearing, distance each), then the attacker/target block, then
/// the Boids block.
///
/// # Safety
/// `env` must be a live handle; `out` must point to `len` doubles matching
/// `arb_env_observation_size`.
#[no_mangle]
pub unsafe extern "C" fn arb_env_observation(
    env: *mut ArbEnv,
    defender: u32,
    noise: i32,
    out: *mut f64,
    len: u32,
) -> i32 {
    guarded(|| {
        let Some(env) = env.as_mut() else {
            return fail_null("env");
        };
        let n = env.cfg.engagement.n_defenders;
        if defender as usize >= n {
            set_last_error(&format!("defender index {defender} out of range ({n} defenders)"));
            return ARB_ERR_CONFIG;
        }
        let need = 2 * (n - 1) + 12;
        if out.is_null() || len as usize != need {
            return fail_null("observation buffer");
        }
        let i = defender as usize;
        let boids_out = defender_boids(&env.state, i, &env.cfg.boids);
        let obs = compute_observation(
            i,
            &env.state,
            &boids_out,
            &env.cfg.engagement,
            noise != 0,
            &mut env.rng,
        );
        let buf = std::slice::from_raw_parts_mut(out, need);
        for (k, (b, d)) in obs.teammates.iter().enumerate() {
            buf[2 * k] = *b;
            buf[2 * k + 1] = *d;
        }
        buf[2 * (n - 1)..2 * (n - 1) + 4].copy_from_slice(&obs.at);
        buf[2 * (n - 1) + 4..].copy_from_slice(&obs.boids);
        ARB_OK
    })
}

/// Advance one decision interval. `actions` holds `2 * n_defenders` doubles
/// (left, right per defender, each in [-1, 1]); the attacker runs the
/// scripted potential-field policy from the config. Per-defender rewards are
/// written to `rewards` (`n_defenders` doubles) and the episode outcome code
/// to `out_outcome`.
///
/// # Safety
/// `env` must be a live handle; the buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn arb_env_step(
    env: *mut ArbEnv,
    actions: *const f64,
    actions_len: u32,
    rewards: *mut f64,
    rewards_len: u32,
    out_outcome: *mut i32,
) -> i32 {
    guarded(|| {
        let Some(env) = env.as_mut() else {
            return fail_null("env");
        };
        let n = env.cfg.engagement.n_defenders;
        if actions.is_null() || actions_len as usize != 2 * n {
            return fail_null("actions buffer");
        }
        if rewards.is_null() || rewards_len as usize != n {
            return fail_null("rewards buffer");
        }
        if out_outcome.is_null() {
            return fail_null("out_outcome");
        }
        let a = std::slice::from_raw_parts(actions, 2 * n);
        let defender_actions: Vec<NormalizedAction> = (0..n)
            .map(|i| NormalizedAction::new(a[2 * i], a[2 * i + 1]))
            .collect();
        let attacker = apf_action(
            env.state.attacker.position(),
            env.state.attacker.psi,
            Vec2::ZERO,
            &env.state.defender_positions(),
            &env.cfg.apf,
        );
        match step(&env.state, &defender_actions, attacker, &env.cfg.engagement) {
            Ok((new_state, step_rewards, outcome)) => {
                env.state = new_state;
                std::slice::from_raw_parts_mut(rewards, n).copy_from_slice(&step_rewards);
                *out_outcome = outcome_code(outcome);
                ARB_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Create a scripted policy (`ARB_POLICY_BOIDS` or `ARB_POLICY_APF`).
///
/// # Safety
/// `out_policy` must be valid; free the handle with `arb_policy_free`.
#[no_mangle]
pub unsafe extern "C" fn arb_policy_new_scripted(kind: i32, out_policy: *mut *mut ArbPolicy) -> i32 {
    guarded(|| {
        if out_policy.is_null() {
            return fail_null("out_policy");
        }
        let inner = match kind {
            ARB_POLICY_BOIDS => PolicyImpl::Boids,
            ARB_POLICY_APF => PolicyImpl::Apf,
            other => {
                set_last_error(&format!(
                    "kind {other} is not a scripted policy (use arb_policy_load for trained ones)"
                ));
                return ARB_ERR_CONFIG;
            }
        };
        *out_policy = Box::into_raw(Box::new(ArbPolicy { inner }));
        ARB_OK
    })
}

/// Load a trained policy from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_policy` must be valid; free
/// the handle with `arb_policy_free`.
#[no_mangle]
pub unsafe extern "C" fn arb_policy_load(
    path: *const c_char,
    out_policy: *mut *mut ArbPolicy,
) -> i32 {
    guarded(|| {
        if out_policy.is_null() {
            return fail_null("out_policy");
        }
        let path = match cstr(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match Learner::<f32>::load(Path::new(path), Default::default()) {
            Ok(l) => {
                *out_policy =
                    Box::into_raw(Box::new(ArbPolicy { inner: PolicyImpl::Learned(Box::new(l)) }));
                ARB_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a policy handle. NULL is ignored.
///
/// # Safety
/// `policy` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn arb_policy_free(policy: *mut ArbPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Policy kind code (`ARB_POLICY_*`).
///
/// # Safety
/// `policy` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn arb_policy_kind(policy: *const ArbPolicy, out: *mut i32) -> i32 {
    guarded(|| {
        let Some(policy) = policy.as_ref() else {
            return fail_null("policy");
        };
        if out.is_null() {
            return fail_null("out");
        }
        *out = policy.kind_code();
        ARB_OK
    })
}

/// Greedy action of `policy` for defender `i` on the environment's current
/// state. Writes (left, right) to `out_action`; if `out_theta` is non-NULL it
/// receives the blend weight (1.0 for learned policies without one, -1.0 for
/// scripted policies). With `noise` nonzero the learned-policy observation is
/// drawn with measurement noise from the environment RNG.
///
/// # Safety
/// `env` and `policy` must be live handles; `out_action` must point to two
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn arb_policy_action(
    policy: *const ArbPolicy,
    env: *mut ArbEnv,
    defender: u32,
    noise: i32,
    out_action: *mut f64,
    out_theta: *mut f64,
) -> i32 {
    guarded(|| {
        let Some(policy) = policy.as_ref() else {
            return fail_null("policy");
        };
        let Some(env) = env.as_mut() else {
            return fail_null("env");
        };
        if out_action.is_null() {
            return fail_null("out_action");
        }
        let n = env.cfg.engagement.n_defenders;
        let i = defender as usize;
        if i >= n {
            set_last_error(&format!("defender index {defender} out of range ({n} defenders)"));
            return ARB_ERR_CONFIG;
        }
        let boids_out = defender_boids(&env.state, i, &env.cfg.boids);
        let (action, theta) = match &policy.inner {
            PolicyImpl::Boids => (boids_out.1, -1.0),
            PolicyImpl::Apf => {
                let me = &env.state.defenders[i];
                let others: Vec<Vec2> = env
                    .state
                    .defenders
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, d)| d.position())
                    .collect();
                (
                    apf_action(
                        me.position(),
                        me.psi,
                        env.state.attacker.position(),
                        &others,
                        &env.cfg.apf,
                    ),
                    -1.0,
                )
            }
            PolicyImpl::Learned(learner) => {
                let obs = compute_observation(
                    i,
                    &env.state,
                    &boids_out,
                    &env.cfg.engagement,
                    noise != 0,
                    &mut env.rng,
                );
                let flat: FlatObs<f32> = flatten_defender_obs(&obs, learner.kind);
                let choice = match learner.select_action(
                    &flat,
                    [boids_out.1.a_left, boids_out.1.a_right],
                    Mode::Eval,
                    &mut env.rng,
                ) {
                    Ok(c) => c,
                    Err(e) => return fail(e),
                };
                (NormalizedAction::new(choice.a_exec[0], choice.a_exec[1]), choice.theta)
            }
        };
        *out_action = action.a_left;
        *out_action.add(1) = action.a_right;
        if !out_theta.is_null() {
            *out_theta = theta;
        }
        ARB_OK
    })
}

/// Play one fresh episode with `policy` defending against the scripted
/// attacker, using the environment config and a new episode drawn from the
/// environment RNG. Writes the outcome code, decision-step count, and
/// simulated duration (any out-pointer may be NULL to skip it). The
/// environment keeps its pre-call state.
///
/// # Safety
/// `env` and `policy` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn arb_rollout(
    env: *mut ArbEnv,
    policy: *const ArbPolicy,
    out_outcome: *mut i32,
    out_steps: *mut u32,
    out_duration: *mut f64,
) -> i32 {
    guarded(|| {
        let Some(env) = env.as_mut() else {
            return fail_null("env");
        };
        let Some(policy) = policy.as_ref() else {
            return fail_null("policy");
        };
        let record = match run_episode(
            &env.cfg.engagement,
            &env.cfg.boids,
            &policy.as_defender(&env.cfg),
            &AttackerPolicy::Apf(&env.cfg.apf),
            &mut env.rng,
            false,
            false,
        ) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        if !out_outcome.is_null() {
            *out_outcome = outcome_code(Some(record.outcome));
        }
        if !out_steps.is_null() {
            *out_steps = record.decision_steps;
        }
        if !out_duration.is_null() {
            *out_duration = record.duration;
        }
        ARB_OK
    })
}
