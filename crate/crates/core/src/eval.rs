//! Deterministic evaluation: scripted/learned policy rollouts, trial
//! statistics with exact outcome tallies, policy comparison grids, and CSV
//! trajectory export.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::apf::{apf_action, attacker_observation, ApfParams};
use crate::boids::{BoidsConfig, NormalizedAction};
use crate::config::{PolicyId, RunConfig};
use crate::env::{
    defender_boids, compute_observation, reset, step, EngagementConfig, EpisodeOutcome,
};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sac::{flatten_attacker_obs, flatten_defender_obs, FlatObs, Learner, Mode};
use crate::vessel::{denormalize, scale_bounds, ThrustCommand};

/// How the defenders act during a rollout.
pub enum DefenderPolicy<'a> {
    /// Flocking heuristic, no parameters.
    Boids,
    /// Potential-field pursuit: attraction to the attacker, repulsion from
    /// teammates inside `rho_a`.
    Apf(&'a ApfParams),
    /// A trained policy evaluated greedily (deterministic head, no noise).
    Learned(&'a Learner<f32>),
}

/// How the attacker acts during a rollout.
pub enum AttackerPolicy<'a> {
    Apf(&'a ApfParams),
    Learned(&'a Learner<f32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Defender,
    Attacker,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Defender => "defender",
            Role::Attacker => "attacker",
        }
    }
}

/// One agent's pose, velocity, and applied command at a decision instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub agent_id: usize,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub tau_left: f64,
    pub tau_right: f64,
    /// Blend weight for learned defenders; `None` for scripted agents.
    pub theta: Option<f64>,
}

/// Everything observed about one finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub outcome: EpisodeOutcome,
    /// Simulated seconds until termination.
    pub duration: f64,
    pub decision_steps: u32,
    /// Per-agent rows at each decision instant; empty unless recording.
    pub frames: Vec<Frame>,
}

/// Play one episode to termination. Learned policies run greedily; `noise_on`
/// controls observation noise. With `record` set, a frame is stored per agent
/// per decision instant (state and the command chosen at it).
pub fn run_episode<R: Rng + ?Sized>(
    env_cfg: &EngagementConfig,
    boids_cfg: &BoidsConfig,
    defender: &DefenderPolicy<'_>,
    attacker: &AttackerPolicy<'_>,
    rng: &mut R,
    noise_on: bool,
    record: bool,
) -> Result<EpisodeRecord> {
    let n = env_cfg.n_defenders;
    let mut state = reset(env_cfg, rng)?;
    let mut frames = Vec::new();
    let mut steps = 0u32;
    let attacker_bounds = scale_bounds(env_cfg.vessel.thrust_bounds, env_cfg.agility)?;

    let outcome = loop {
        let mut actions = Vec::with_capacity(n);
        let mut thetas: Vec<Option<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let boids_out = defender_boids(&state, i, boids_cfg);
            match defender {
                DefenderPolicy::Boids => {
                    actions.push(boids_out.1);
                    thetas.push(None);
                }
                DefenderPolicy::Apf(params) => {
                    let me = &state.defenders[i];
                    let others: Vec<Vec2> = state
                        .defenders
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, d)| d.position())
                        .collect();
                    actions.push(apf_action(
                        me.position(),
                        me.psi,
                        state.attacker.position(),
                        &others,
                        params,
                    ));
                    thetas.push(None);
                }
                DefenderPolicy::Learned(learner) => {
                    let obs = compute_observation(i, &state, &boids_out, env_cfg, noise_on, rng);
                    let flat: FlatObs<f32> = flatten_defender_obs(&obs, learner.kind);
                    let choice = learner.select_action(
                        &flat,
                        [boids_out.1.a_left, boids_out.1.a_right],
                        Mode::Eval,
                        rng,
                    )?;
                    actions.push(NormalizedAction::new(choice.a_exec[0], choice.a_exec[1]));
                    thetas.push(Some(choice.theta));
                }
            }
        }

        let attacker_action = match attacker {
            AttackerPolicy::Apf(params) => apf_action(
                state.attacker.position(),
                state.attacker.psi,
                Vec2::ZERO,
                &state.defender_positions(),
                params,
            ),
            AttackerPolicy::Learned(learner) => {
                let obs = attacker_observation(&state, env_cfg);
                let flat: FlatObs<f32> = flatten_attacker_obs(&obs);
                let choice = learner.select_action(&flat, [0.0, 0.0], Mode::Eval, rng)?;
                NormalizedAction::new(choice.a_exec[0], choice.a_exec[1])
            }
        };

        if record {
            for i in 0..n {
                let d = &state.defenders[i];
                let tau = ThrustCommand::new(
                    denormalize(actions[i].a_left, env_cfg.vessel.thrust_bounds),
                    denormalize(actions[i].a_right, env_cfg.vessel.thrust_bounds),
                );
                frames.push(Frame {
                    t: state.t,
                    agent_id: i,
                    role: Role::Defender,
                    x: d.x,
                    y: d.y,
                    psi: d.psi,
                    u: d.u,
                    v: d.v,
                    r: d.r,
                    tau_left: tau.tau_left,
                    tau_right: tau.tau_right,
                    theta: thetas[i],
                });
            }
            let a = &state.attacker;
            frames.push(Frame {
                t: state.t,
                agent_id: n,
                role: Role::Attacker,
                x: a.x,
                y: a.y,
                psi: a.psi,
                u: a.u,
                v: a.v,
                r: a.r,
                tau_left: denormalize(attacker_action.a_left, attacker_bounds),
                tau_right: denormalize(attacker_action.a_right, attacker_bounds),
                theta: None,
            });
        }

        let (new_state, _rewards, outcome) = step(&state, &actions, attacker_action, env_cfg)?;
        steps += 1;
        state = new_state;
        if let Some(o) = outcome {
            break o;
        }
    };

    Ok(EpisodeRecord { outcome, duration: state.t, decision_steps: steps, frames })
}

/// Exact outcome tallies over a batch of trials. The four counters always sum
/// to `trials`, so the derived rates partition one by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u32,
    pub captures: u32,
    pub timeouts: u32,
    pub breaches: u32,
    pub collisions: u32,
    /// Mean simulated seconds to capture, over capture endings only.
    pub mean_time_to_capture: Option<f64>,
    pub base_seed: u64,
}

impl TrialStats {
    pub fn successes(&self) -> u32 {
        self.captures + self.timeouts
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.trials as f64
    }

    pub fn capture_rate(&self) -> f64 {
        self.captures as f64 / self.trials as f64
    }

    pub fn breach_rate(&self) -> f64 {
        self.breaches as f64 / self.trials as f64
    }

    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / self.trials as f64
    }

    /// Wilson 95% score interval for the success rate.
    pub fn wilson95(&self) -> (f64, f64) {
        wilson_interval(self.successes(), self.trials)
    }
}

/// Wilson score interval with 95% coverage for `successes` out of `n`.
pub fn wilson_interval(successes: u32, n: u32) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Evaluation spawn sector: width pi/2, centered on an axis drawn uniformly
/// per trial so trials cover all approach directions without full-circle
/// variance inside one trial.
pub fn eval_spawn_sector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let axis = rng.random_range(-PI..PI);
    [axis - PI / 4.0, axis + PI / 4.0]
}

/// Run `n_trials` independent evaluation episodes. Trial `k` uses seed
/// `base_seed + k`; observation noise and exploration noise are off.
/// `agility`/`n_defenders` override the config.
pub fn run_trials(
    cfg: &RunConfig,
    defender: &DefenderPolicy<'_>,
    attacker: &AttackerPolicy<'_>,
    n_trials: u32,
    base_seed: u64,
    agility: Option<f64>,
    n_defenders: Option<usize>,
) -> Result<TrialStats> {
    if n_trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let mut env_cfg = cfg.engagement.clone();
    if let Some(a) = agility {
        env_cfg.agility = a;
    }
    if let Some(n) = n_defenders {
        env_cfg.n_defenders = n;
    }
    env_cfg.validate()?;

    let mut stats = TrialStats {
        trials: n_trials,
        captures: 0,
        timeouts: 0,
        breaches: 0,
        collisions: 0,
        mean_time_to_capture: None,
        base_seed,
    };
    let mut capture_time_sum = 0.0;
    for k in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(k as u64));
        let mut trial_cfg = env_cfg.clone();
        trial_cfg.spawn_sector = eval_spawn_sector(&mut rng);
        let rec = run_episode(&trial_cfg, &cfg.boids, defender, attacker, &mut rng, false, false)?;
        match rec.outcome {
            EpisodeOutcome::CaptureSuccess { .. } => {
                stats.captures += 1;
                capture_time_sum += rec.duration;
            }
            EpisodeOutcome::TimeoutSuccess => stats.timeouts += 1,
            EpisodeOutcome::BreachFailure => stats.breaches += 1,
            EpisodeOutcome::CollisionFailure { .. } => stats.collisions += 1,
        }
    }
    if stats.captures > 0 {
        stats.mean_time_to_capture = Some(capture_time_sum / stats.captures as f64);
    }
    Ok(stats)
}

/// One cell of a comparison grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub policy: PolicyId,
    pub agility: f64,
    pub n_defenders: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub stats: TrialStats,
}

/// A defender policy paired with its identifier, for grid evaluation.
pub struct NamedPolicy<'a> {
    pub id: PolicyId,
    pub policy: DefenderPolicy<'a>,
}

pub const COMPARE_AGILITIES: [f64; 4] = [1.5, 2.0, 2.5, 3.0];
pub const COMPARE_TEAM_SIZES: [usize; 5] = [2, 3, 4, 5, 6];
/// Agility held fixed while sweeping team size.
pub const COMPARE_TEAM_AGILITY: f64 = 2.0;

/// Evaluate each policy over the agility sweep (at the config team size) and
/// the team-size sweep (at agility 2.0). Every cell runs `trials` episodes.
pub fn compare_grid(
    cfg: &RunConfig,
    policies: &[NamedPolicy<'_>],
    trials: u32,
    base_seed: u64,
) -> Result<Vec<CompareRow>> {
    let attacker = AttackerPolicy::Apf(&cfg.apf);
    let mut rows = Vec::new();
    for p in policies {
        for &agility in &COMPARE_AGILITIES {
            let stats =
                run_trials(cfg, &p.policy, &attacker, trials, base_seed, Some(agility), None)?;
            rows.push(make_row(p.id, agility, cfg.engagement.n_defenders, stats));
        }
        for &n in &COMPARE_TEAM_SIZES {
            let stats = run_trials(
                cfg,
                &p.policy,
                &attacker,
                trials,
                base_seed,
                Some(COMPARE_TEAM_AGILITY),
                Some(n),
            )?;
            rows.push(make_row(p.id, COMPARE_TEAM_AGILITY, n, stats));
        }
    }
    Ok(rows)
}

fn make_row(policy: PolicyId, agility: f64, n_defenders: usize, stats: TrialStats) -> CompareRow {
    let (lo, hi) = stats.wilson95();
    CompareRow {
        policy,
        agility,
        n_defenders,
        success_rate: stats.success_rate(),
        wilson_low: lo,
        wilson_high: hi,
        stats,
    }
}

pub const TRAJECTORY_HEADER: &str = "t,agent_id,role,x,y,psi,u,v,r,tau_left,tau_right,theta";

/// Write one episode's frames as CSV: a header, one row per agent per
/// decision instant, then an outcome footer (`# outcome: <label>`). The theta
/// column is empty for scripted agents.
pub fn write_trajectories<W: Write>(record: &EpisodeRecord, mut w: W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for f in &record.frames {
        let theta = f.theta.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            f.t,
            f.agent_id,
            f.role.label(),
            f.x,
            f.y,
            f.psi,
            f.u,
            f.v,
            f.r,
            f.tau_left,
            f.tau_right,
            theta
        )?;
    }
    writeln!(w, "# outcome: {}", record.outcome.label())?;
    Ok(())
}

/// Parse CSV produced by [`write_trajectories`]; returns the frames and the
/// outcome label from the footer.
pub fn read_trajectories<R: BufRead>(r: R) -> Result<(Vec<Frame>, String)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::io("empty trajectory file"))??;
    if header != TRAJECTORY_HEADER {
        return Err(Error::io(format!("unexpected trajectory header: {header}")));
    }
    let mut frames = Vec::new();
    let mut outcome = None;
    for line in lines {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# outcome: ") {
            outcome = Some(rest.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 12 {
            return Err(Error::io(format!("bad trajectory row: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::io(format!("bad number '{s}': {e}")))
        };
        let role = match cols[2] {
            "defender" => Role::Defender,
            "attacker" => Role::Attacker,
            other => return Err(Error::io(format!("bad role '{other}'"))),
        };
        frames.push(Frame {
            t: num(cols[0])?,
            agent_id: cols[1]
                .parse()
                .map_err(|e| Error::io(format!("bad agent id '{}': {e}", cols[1])))?,
            role,
            x: num(cols[3])?,
            y: num(cols[4])?,
            psi: num(cols[5])?,
            u: num(cols[6])?,
            v: num(cols[7])?,
            r: num(cols[8])?,
            tau_left: num(cols[9])?,
            tau_right: num(cols[10])?,
            theta: if cols[11].is_empty() { None } else { Some(num(cols[11])?) },
        });
    }
    let outcome = outcome.ok_or_else(|| Error::io("trajectory file missing outcome footer"))?;
    Ok((frames, outcome))
}
