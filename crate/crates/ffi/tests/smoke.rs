//! Exercises the C ABI from Rust: handle lifecycles, buffer contracts, error
//! paths, and a full scripted rollout.

use std::ffi::{CStr, CString};
use std::ptr;

use arboids::config::RunConfig;
use arboids::sac::{Learner, LearnerConfig, PolicyKind};
use arboids_ffi::*;
use rand::SeedableRng;

fn last_error() -> String {
    unsafe { CStr::from_ptr(arb_last_error()).to_string_lossy().into_owned() }
}

fn new_env(config: Option<&str>, seed: u64) -> *mut ArbEnv {
    let mut env: *mut ArbEnv = ptr::null_mut();
    let holder = config.map(|c| CString::new(c).unwrap());
    let ptr = holder.as_ref().map_or(ptr::null(), |c| c.as_ptr());
    let code = unsafe { arb_env_new(ptr, seed, &mut env) };
    assert_eq!(code, ARB_OK, "arb_env_new failed: {}", last_error());
    assert!(!env.is_null());
    env
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(arb_version()) }.to_str().unwrap();
    assert!(!v.is_empty());
    assert!(v.chars().next().unwrap().is_ascii_digit());
}

#[test]
fn env_lifecycle_and_accessors() {
    let env = new_env(None, 7);
    unsafe {
        let mut n = 0u32;
        assert_eq!(arb_env_num_defenders(env, &mut n), ARB_OK);
        assert_eq!(n, 3);

        let mut t = -1.0f64;
        assert_eq!(arb_env_time(env, &mut t), ARB_OK);
        assert_eq!(t, 0.0);

        let mut outcome = -1i32;
        assert_eq!(arb_env_outcome(env, &mut outcome), ARB_OK);
        assert_eq!(outcome, ARB_OUTCOME_LIVE);

        let mut size = 0u32;
        assert_eq!(arb_env_state_size(env, &mut size), ARB_OK);
        assert_eq!(size, 24); // 4 vessels x 6 doubles

        let mut state = vec![0.0f64; size as usize];
        assert_eq!(arb_env_state(env, state.as_mut_ptr(), size), ARB_OK);
        // Defenders spawn on the half-radius ring of the protected circle.
        for d in 0..3 {
            let (x, y) = (state[6 * d], state[6 * d + 1]);
            let r = (x * x + y * y).sqrt();
            assert!((r - 7.5).abs() < 1e-9, "defender {d} ring radius {r}");
        }
        // Attacker spawns on the outer ring.
        let (ax, ay) = (state[18], state[19]);
        assert!(((ax * ax + ay * ay).sqrt() - 60.0).abs() < 1e-9);

        arb_env_free(env);
    }
}

#[test]
fn reset_is_seed_deterministic() {
    let env = new_env(None, 3);
    unsafe {
        let mut a = vec![0.0f64; 24];
        let mut b = vec![0.0f64; 24];
        assert_eq!(arb_env_state(env, a.as_mut_ptr(), 24), ARB_OK);
        assert_eq!(arb_env_reset(env, 99), ARB_OK);
        assert_eq!(arb_env_reset(env, 3), ARB_OK);
        assert_eq!(arb_env_state(env, b.as_mut_ptr(), 24), ARB_OK);
        assert_eq!(a, b);
        arb_env_free(env);
    }
}

#[test]
fn custom_config_round_trips() {
    let env = new_env(Some(r#"{"engagement": {"n_defenders": 5}}"#), 1);
    unsafe {
        let mut n = 0u32;
        assert_eq!(arb_env_num_defenders(env, &mut n), ARB_OK);
        assert_eq!(n, 5);
        let mut size = 0u32;
        assert_eq!(arb_env_observation_size(env, &mut size), ARB_OK);
        assert_eq!(size, 2 * 4 + 12);
        arb_env_free(env);
    }
}

#[test]
fn step_advances_time_and_returns_rewards() {
    let env = new_env(None, 11);
    unsafe {
        let actions = [0.2f64; 6];
        let mut rewards = [f64::NAN; 3];
        let mut outcome = -1i32;
        assert_eq!(
            arb_env_step(env, actions.as_ptr(), 6, rewards.as_mut_ptr(), 3, &mut outcome),
            ARB_OK,
            "{}",
            last_error()
        );
        assert!(rewards.iter().all(|r| r.is_finite()));
        assert_eq!(outcome, ARB_OUTCOME_LIVE);
        let mut t = 0.0;
        assert_eq!(arb_env_time(env, &mut t), ARB_OK);
        assert!((t - 0.2).abs() < 1e-12);
        arb_env_free(env);
    }
}

#[test]
fn step_runs_episode_to_termination() {
    let env = new_env(None, 5);
    unsafe {
        let actions = [0.0f64; 6]; // passive defenders: the attacker should breach
        let mut rewards = [0.0f64; 3];
        let mut outcome = ARB_OUTCOME_LIVE;
        let mut steps = 0;
        while outcome == ARB_OUTCOME_LIVE {
            assert_eq!(
                arb_env_step(env, actions.as_ptr(), 6, rewards.as_mut_ptr(), 3, &mut outcome),
                ARB_OK
            );
            steps += 1;
            assert!(steps <= 300, "episode never terminated");
        }
        assert_ne!(outcome, ARB_OUTCOME_LIVE);
        // Stepping past the end is a runtime error.
        assert_eq!(
            arb_env_step(env, actions.as_ptr(), 6, rewards.as_mut_ptr(), 3, &mut outcome),
            ARB_ERR_RUNTIME
        );
        arb_env_free(env);
    }
}

#[test]
fn observation_layout_and_noise_flag() {
    let env = new_env(None, 2);
    unsafe {
        let mut size = 0u32;
        assert_eq!(arb_env_observation_size(env, &mut size), ARB_OK);
        assert_eq!(size, 16); // 2 teammates x 2 + 4 + 8
        let mut clean = vec![0.0f64; 16];
        let mut noisy = vec![0.0f64; 16];
        assert_eq!(arb_env_observation(env, 0, 0, clean.as_mut_ptr(), 16), ARB_OK);
        assert_eq!(arb_env_observation(env, 0, 1, noisy.as_mut_ptr(), 16), ARB_OK);
        // Noise only perturbs the attacker/target block.
        assert_eq!(clean[..4], noisy[..4]);
        assert_ne!(clean[4..8], noisy[4..8]);
        assert_eq!(clean[8..], noisy[8..]);

        assert_eq!(arb_env_observation(env, 9, 0, clean.as_mut_ptr(), 16), ARB_ERR_CONFIG);
        arb_env_free(env);
    }
}

#[test]
fn null_and_size_errors() {
    unsafe {
        assert_eq!(arb_env_new(ptr::null(), 0, ptr::null_mut()), ARB_ERR_NULL);
        assert_eq!(arb_env_reset(ptr::null_mut(), 0), ARB_ERR_NULL);
        let mut out = 0u32;
        assert_eq!(arb_env_num_defenders(ptr::null(), &mut out), ARB_ERR_NULL);

        let env = new_env(None, 0);
        let mut buf = [0.0f64; 4];
        assert_eq!(arb_env_state(env, buf.as_mut_ptr(), 4), ARB_ERR_NULL); // wrong length
        assert_eq!(arb_env_state(env, ptr::null_mut(), 24), ARB_ERR_NULL);
        assert!(!last_error().is_empty());
        arb_env_free(env);
        arb_env_free(ptr::null_mut()); // no-op
        arb_policy_free(ptr::null_mut());
    }
}

#[test]
fn bad_config_json_reports_config_error() {
    let mut env: *mut ArbEnv = ptr::null_mut();
    let bad = CString::new(r#"{"engagement": {"r_cap": -1.0}}"#).unwrap();
    let code = unsafe { arb_env_new(bad.as_ptr(), 0, &mut env) };
    assert_eq!(code, ARB_ERR_CONFIG);
    assert!(env.is_null());
    assert!(last_error().contains("r_cap"), "message was: {}", last_error());

    let garbage = CString::new("not json").unwrap();
    assert_eq!(unsafe { arb_env_new(garbage.as_ptr(), 0, &mut env) }, ARB_ERR_CONFIG);
}

#[test]
fn scripted_policies_act_and_roll_out() {
    let env = new_env(None, 42);
    unsafe {
        for kind in [ARB_POLICY_BOIDS, ARB_POLICY_APF] {
            let mut policy: *mut ArbPolicy = ptr::null_mut();
            assert_eq!(arb_policy_new_scripted(kind, &mut policy), ARB_OK);
            let mut got = -1;
            assert_eq!(arb_policy_kind(policy, &mut got), ARB_OK);
            assert_eq!(got, kind);

            let mut action = [f64::NAN; 2];
            let mut theta = 0.0;
            assert_eq!(arb_policy_action(policy, env, 0, 0, action.as_mut_ptr(), &mut theta), ARB_OK);
            assert!(action.iter().all(|a| a.is_finite() && a.abs() <= 1.0));
            assert_eq!(theta, -1.0); // scripted policies have no blend weight

            let mut outcome = -1;
            let mut steps = 0u32;
            let mut duration = 0.0f64;
            assert_eq!(arb_rollout(env, policy, &mut outcome, &mut steps, &mut duration), ARB_OK);
            assert_ne!(outcome, ARB_OUTCOME_LIVE);
            assert!(steps > 0 && duration > 0.0);
            arb_policy_free(policy);
        }
        arb_env_free(env);
    }
}

#[test]
fn scripted_kind_rejects_learned_codes() {
    let mut policy: *mut ArbPolicy = ptr::null_mut();
    assert_eq!(
        unsafe { arb_policy_new_scripted(ARB_POLICY_ARBOIDS, &mut policy) },
        ARB_ERR_CONFIG
    );
    assert!(policy.is_null());
}

#[test]
fn load_checkpoint_and_act() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    // Save an untrained adaptive-residual learner sized for the default team.
    let cfg = RunConfig::default();
    let learner = Learner::<f32>::new(
        PolicyKind::Arboids,
        4,
        cfg.engagement.n_defenders - 1,
        LearnerConfig::default(),
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    learner.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut policy: *mut ArbPolicy = ptr::null_mut();
    unsafe {
        assert_eq!(arb_policy_load(c_path.as_ptr(), &mut policy), ARB_OK, "{}", last_error());
        let mut kind = -1;
        assert_eq!(arb_policy_kind(policy, &mut kind), ARB_OK);
        assert_eq!(kind, ARB_POLICY_ARBOIDS);

        let env = new_env(None, 9);
        let mut action = [f64::NAN; 2];
        let mut theta = f64::NAN;
        assert_eq!(
            arb_policy_action(policy, env, 1, 0, action.as_mut_ptr(), &mut theta),
            ARB_OK,
            "{}",
            last_error()
        );
        assert!(action.iter().all(|a| a.is_finite() && a.abs() <= 1.0));
        assert!((0.0..=1.0).contains(&theta));

        let mut outcome = -1;
        assert_eq!(arb_rollout(env, policy, &mut outcome, ptr::null_mut(), ptr::null_mut()), ARB_OK);
        assert_ne!(outcome, ARB_OUTCOME_LIVE);

        arb_env_free(env);
        arb_policy_free(policy);
    }
}

#[test]
fn load_missing_checkpoint_fails() {
    let c_path = CString::new("/nonexistent/net.ckpt").unwrap();
    let mut policy: *mut ArbPolicy = ptr::null_mut();
    let code = unsafe { arb_policy_load(c_path.as_ptr(), &mut policy) };
    assert!(code == ARB_ERR_IO || code == ARB_ERR_CHECKPOINT, "code {code}");
    assert!(policy.is_null());
}

#[test]
fn header_was_generated() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/arboids.h");
    let text = std::fs::read_to_string(header).expect("include/arboids.h missing");
    for needle in ["arb_env_new", "arb_env_step", "arb_rollout", "ARB_OUTCOME_BREACH"] {
        assert!(text.contains(needle), "header lacks {needle}");
    }
}
