//! Training orchestration: episode generation with the agility curriculum,
//! replay-driven updates, periodic greedy evaluation, JSONL metrics, and
//! checkpointing — for single-side training against the scripted attacker and
//! for alternating two-side training.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::apf::{apf_action, attacker_observation, attacker_reward};
use crate::boids::NormalizedAction;
use crate::config::{CurriculumConfig, RunConfig};
use crate::env::{compute_observation, defender_boids, reset, step, EngagementState};
use crate::error::{Error, Result};
use crate::eval::{run_trials, AttackerPolicy, DefenderPolicy, TrialStats};
use crate::geom::Vec2;
use crate::sac::{
    blend, flatten_attacker_obs, flatten_defender_obs, ActionChoice, FlatObs, Learner, Mode,
    PolicyKind, Transition, UpdateStats,
};

/// Width of the defender attacker/target observation block.
pub const DEFENDER_AT_DIM: usize = 4;
/// Width of the attacker target observation block.
pub const ATTACKER_AT_DIM: usize = 2;
/// Width of one (bearing, distance) teammate/defender item.
pub const POLAR_DIM: usize = 2;

/// Fresh defender learner with the engagement's observation geometry.
pub fn new_defender_learner<R: Rng + ?Sized>(
    kind: PolicyKind,
    cfg: &crate::sac::LearnerConfig,
    rng: &mut R,
) -> Result<Learner<f32>> {
    Learner::new(kind, DEFENDER_AT_DIM, POLAR_DIM, cfg.clone(), rng)
}

/// Fresh attacker learner (plain SAC on the attacker observation).
pub fn new_attacker_learner<R: Rng + ?Sized>(
    cfg: &crate::sac::LearnerConfig,
    rng: &mut R,
) -> Result<Learner<f32>> {
    Learner::new(PolicyKind::VanillaSac, ATTACKER_AT_DIM, POLAR_DIM, cfg.clone(), rng)
}

/// Draw a per-episode agility from the curriculum plateau at `step`.
pub fn sample_agility<R: Rng + ?Sized>(
    cur: &CurriculumConfig,
    step: u64,
    rng: &mut R,
) -> f64 {
    let mean = cur.mean_at(step);
    if cur.half_width == 0.0 {
        return mean;
    }
    rng.random_range(mean - cur.half_width..mean + cur.half_width)
}

/// Which side of the engagement a training phase updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Defender,
    Attacker,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Defender => "defender",
            Side::Attacker => "attacker",
        }
    }

    fn index(self) -> usize {
        match self {
            Side::Defender => 0,
            Side::Attacker => 1,
        }
    }
}

/// One alternating-training phase: the trained side and its step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub side: Side,
    pub steps: u64,
}

/// Strictly alternating sequence of phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
}

impl PhaseSchedule {
    /// Default schedule: `count` phases of `steps_each`, defender first,
    /// sides strictly alternating.
    pub fn alternating(count: usize, steps_each: u64) -> Self {
        let phases = (0..count)
            .map(|i| Phase {
                side: if i % 2 == 0 { Side::Defender } else { Side::Attacker },
                steps: steps_each,
            })
            .collect();
        Self { phases }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("phase schedule must contain at least one phase"));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.steps == 0 {
                return Err(Error::config(format!("phase {} has a zero step budget", i + 1)));
            }
            if i > 0 && self.phases[i - 1].side == p.side {
                return Err(Error::config(format!(
                    "phases {} and {} both train the {}; sides must alternate",
                    i,
                    i + 1,
                    p.side.label()
                )));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.phases.iter().map(|p| p.steps).sum()
    }
}

/// Summary of a finished training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub final_eval: Option<TrialStats>,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    kind: &'a str,
    phase: &'a str,
    step: u64,
    episode: u64,
    outcome: &'a str,
    #[serde(rename = "return")]
    ret: f64,
    agility: f64,
    alpha: f64,
    buffer: usize,
    updates: u64,
}

#[derive(Serialize)]
struct EvalRow<'a> {
    kind: &'a str,
    phase: &'a str,
    step: u64,
    success_rate: f64,
    captures: u32,
    timeouts: u32,
    breaches: u32,
    collisions: u32,
    alpha: f64,
    updates: u64,
    mean_critic_loss: Option<f64>,
    mean_actor_loss: Option<f64>,
    mean_theta: Option<f64>,
    mean_entropy: Option<f64>,
}

/// Append-only JSONL sink, flushed per row.
struct MetricsWriter {
    w: BufWriter<File>,
}

impl MetricsWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self { w: BufWriter::new(File::create(path)?) })
    }

    fn row<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::runtime(format!("metrics serialization failed: {e}")))?;
        writeln!(self.w, "{line}")?;
        self.w.flush()?;
        Ok(())
    }
}

/// Running sums of update statistics between two metrics rows.
#[derive(Default)]
struct StatAcc {
    n: u64,
    critic: f64,
    actor: f64,
    theta: f64,
    entropy: f64,
}

impl StatAcc {
    fn add(&mut self, s: &UpdateStats) {
        self.n += 1;
        self.critic += 0.5 * (s.critic_loss[0] + s.critic_loss[1]);
        self.actor += s.actor_loss;
        self.theta += s.mean_theta;
        self.entropy += s.mean_entropy;
    }

    fn drain(&mut self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        let out = if self.n == 0 {
            (None, None, None, None)
        } else {
            let n = self.n as f64;
            (
                Some(self.critic / n),
                Some(self.actor / n),
                Some(self.theta / n),
                Some(self.entropy / n),
            )
        };
        *self = Self::default();
        out
    }
}

/// Exploration action during warmup: uniform raw action, uniform blend
/// weight where the policy has one.
fn warmup_choice<R: Rng + ?Sized>(
    kind: PolicyKind,
    a_boids: [f64; 2],
    rng: &mut R,
) -> ActionChoice {
    let a_drl = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let theta = if kind.has_adapter() { rng.random_range(0.0..1.0) } else { 1.0 };
    ActionChoice { a_exec: blend(kind, theta, a_drl, a_boids), a_drl, theta }
}

/// Per-defender observation context carried across one decision step.
struct DefObs {
    flat: FlatObs<f32>,
    a_boids: [f64; 2],
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    rng: ChaCha8Rng,
    metrics: MetricsWriter,
    ck_dir: PathBuf,
    /// Step-tagged checkpoints of the trained side (single-run mode only).
    step_checkpoints: bool,
    env_steps: u64,
    side_steps: [u64; 2],
    episodes: u64,
    updates: u64,
    acc: StatAcc,
}

impl<'a> Trainer<'a> {
    fn defender_contexts<R: Rng + ?Sized>(
        state: &EngagementState,
        cfg: &RunConfig,
        env_cfg: &crate::env::EngagementConfig,
        kind: PolicyKind,
        rng: &mut R,
    ) -> Vec<DefObs> {
        (0..env_cfg.n_defenders)
            .map(|i| {
                let b = defender_boids(state, i, &cfg.boids);
                let obs = compute_observation(i, state, &b, env_cfg, true, rng);
                DefObs {
                    flat: flatten_defender_obs(&obs, kind),
                    a_boids: [b.1.a_left, b.1.a_right],
                }
            })
            .collect()
    }

    /// Generate `budget` decision steps of experience, updating `active`'s
    /// learner; the other side acts greedily (frozen) or by script.
    fn run_phase(
        &mut self,
        defender: &mut Learner<f32>,
        mut attacker: Option<&mut Learner<f32>>,
        active: Side,
        budget: u64,
        label: &str,
    ) -> Result<()> {
        if active == Side::Attacker && attacker.is_none() {
            return Err(Error::config("attacker phase requires an attacker learner"));
        }
        let def_kind = defender.kind;
        let phase_end = self.env_steps + budget;

        while self.env_steps < phase_end {
            let agility = if self.cfg.curriculum.enabled {
                sample_agility(&self.cfg.curriculum, self.env_steps, &mut self.rng)
            } else {
                self.cfg.engagement.agility
            };
            let mut env_cfg = self.cfg.engagement.clone();
            env_cfg.agility = agility;

            let mut state = reset(&env_cfg, &mut self.rng)?;
            let n = env_cfg.n_defenders;
            let mut cur_def =
                Self::defender_contexts(&state, self.cfg, &env_cfg, def_kind, &mut self.rng);
            let mut cur_att: Option<FlatObs<f32>> = attacker
                .as_deref()
                .map(|_| flatten_attacker_obs(&attacker_observation(&state, &env_cfg)));

            let mut ep_return = 0.0;
            let mut ep_outcome: Option<&'static str> = None;

            loop {
                if self.env_steps >= phase_end {
                    break;
                }

                let mut def_actions = Vec::with_capacity(n);
                let mut def_choices = Vec::with_capacity(n);
                for d in &cur_def {
                    let choice = match active {
                        Side::Defender => {
                            if self.side_steps[0] < defender.cfg.warmup_steps {
                                warmup_choice(def_kind, d.a_boids, &mut self.rng)
                            } else {
                                defender.select_action(
                                    &d.flat,
                                    d.a_boids,
                                    Mode::Train,
                                    &mut self.rng,
                                )?
                            }
                        }
                        Side::Attacker => {
                            defender.select_action(&d.flat, d.a_boids, Mode::Eval, &mut self.rng)?
                        }
                    };
                    def_actions.push(NormalizedAction::new(choice.a_exec[0], choice.a_exec[1]));
                    def_choices.push(choice);
                }

                let mut att_choice: Option<ActionChoice> = None;
                let att_action = match &attacker {
                    None => apf_action(
                        state.attacker.position(),
                        state.attacker.psi,
                        Vec2::ZERO,
                        &state.defender_positions(),
                        &self.cfg.apf,
                    ),
                    Some(att) => {
                        let flat = cur_att.as_ref().expect("attacker obs context");
                        let choice = match active {
                            Side::Attacker => {
                                if self.side_steps[1] < att.cfg.warmup_steps {
                                    warmup_choice(PolicyKind::VanillaSac, [0.0, 0.0], &mut self.rng)
                                } else {
                                    att.select_action(flat, [0.0, 0.0], Mode::Train, &mut self.rng)?
                                }
                            }
                            Side::Defender => {
                                att.select_action(flat, [0.0, 0.0], Mode::Eval, &mut self.rng)?
                            }
                        };
                        let a = NormalizedAction::new(choice.a_exec[0], choice.a_exec[1]);
                        att_choice = Some(choice);
                        a
                    }
                };

                let prev_state = state;
                let (new_state, rewards, outcome) =
                    step(&prev_state, &def_actions, att_action, &env_cfg)?;
                state = new_state;
                self.env_steps += 1;
                self.side_steps[active.index()] += 1;
                let done = outcome.is_some();

                let next_def =
                    Self::defender_contexts(&state, self.cfg, &env_cfg, def_kind, &mut self.rng);
                let next_att: Option<FlatObs<f32>> = attacker
                    .as_deref()
                    .map(|_| flatten_attacker_obs(&attacker_observation(&state, &env_cfg)));

                match active {
                    Side::Defender => {
                        ep_return += rewards.iter().sum::<f64>() / n as f64;
                        for i in 0..n {
                            defender.push(Transition {
                                obs: cur_def[i].flat.clone(),
                                a_drl: [
                                    def_choices[i].a_drl[0] as f32,
                                    def_choices[i].a_drl[1] as f32,
                                ],
                                theta: def_choices[i].theta as f32,
                                reward: rewards[i] as f32,
                                next_obs: next_def[i].flat.clone(),
                                done,
                                a_boids: [
                                    cur_def[i].a_boids[0] as f32,
                                    cur_def[i].a_boids[1] as f32,
                                ],
                            })?;
                        }
                    }
                    Side::Attacker => {
                        let r = attacker_reward(&prev_state, &state, outcome, &env_cfg);
                        ep_return += r;
                        let choice = att_choice.expect("attacker choice in attacker phase");
                        let att = attacker.as_mut().expect("attacker learner");
                        att.push(Transition {
                            obs: cur_att.clone().expect("attacker obs context"),
                            a_drl: [choice.a_drl[0] as f32, choice.a_drl[1] as f32],
                            theta: choice.theta as f32,
                            reward: r as f32,
                            next_obs: next_att.clone().expect("attacker obs context"),
                            done,
                            a_boids: [0.0, 0.0],
                        })?;
                    }
                }
                cur_def = next_def;
                cur_att = next_att;

                {
                    let learner: &mut Learner<f32> = match active {
                        Side::Defender => defender,
                        Side::Attacker => attacker.as_mut().expect("attacker learner"),
                    };
                    if self.side_steps[active.index()] > learner.cfg.warmup_steps
                        && learner.buffer.len() >= learner.cfg.batch
                    {
                        for _ in 0..learner.cfg.updates_per_step {
                            let stats = learner.update(&mut self.rng)?;
                            self.acc.add(&stats);
                            self.updates += 1;
                        }
                    }
                }

                if self.env_steps % self.cfg.training.eval_every == 0 {
                    self.emit_eval_row(defender, attacker.as_deref(), active, label)?;
                }
                if self.step_checkpoints && self.env_steps % self.cfg.training.checkpoint_every == 0
                {
                    let path = self.ck_dir.join(format!("step_{:07}.ckpt", self.env_steps));
                    defender.save(&path)?;
                }

                if done {
                    ep_outcome = outcome.map(|o| o.label());
                    break;
                }
            }

            self.episodes += 1;
            let alpha = match active {
                Side::Defender => defender.alpha(),
                Side::Attacker => attacker.as_deref().expect("attacker learner").alpha(),
            };
            let buffer = match active {
                Side::Defender => defender.buffer.len(),
                Side::Attacker => attacker.as_deref().expect("attacker learner").buffer.len(),
            };
            self.metrics.row(&EpisodeRow {
                kind: "episode",
                phase: label,
                step: self.env_steps,
                episode: self.episodes,
                outcome: ep_outcome.unwrap_or("cutoff"),
                ret: ep_return,
                agility,
                alpha,
                buffer,
                updates: self.updates,
            })?;
        }
        Ok(())
    }

    /// Greedy evaluation of the defender against the current opposition
    /// (learned attacker when present, scripted otherwise).
    fn emit_eval_row(
        &mut self,
        defender: &Learner<f32>,
        attacker: Option<&Learner<f32>>,
        active: Side,
        label: &str,
    ) -> Result<()> {
        let stats = self.eval_defender(defender, attacker)?;
        let alpha = match (active, attacker) {
            (Side::Attacker, Some(a)) => a.alpha(),
            _ => defender.alpha(),
        };
        let (critic, actor, theta, entropy) = self.acc.drain();
        self.metrics.row(&EvalRow {
            kind: "eval",
            phase: label,
            step: self.env_steps,
            success_rate: stats.success_rate(),
            captures: stats.captures,
            timeouts: stats.timeouts,
            breaches: stats.breaches,
            collisions: stats.collisions,
            alpha,
            updates: self.updates,
            mean_critic_loss: critic,
            mean_actor_loss: actor,
            mean_theta: theta,
            mean_entropy: entropy,
        })
    }

    fn eval_defender(
        &self,
        defender: &Learner<f32>,
        attacker: Option<&Learner<f32>>,
    ) -> Result<TrialStats> {
        let seed = self
            .cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.env_steps);
        let agility = self.cfg.training.eval_agility;
        let att_policy = match attacker {
            Some(a) => AttackerPolicy::Learned(a),
            None => AttackerPolicy::Apf(&self.cfg.apf),
        };
        run_trials(
            self.cfg,
            &DefenderPolicy::Learned(defender),
            &att_policy,
            self.cfg.training.eval_episodes,
            seed,
            agility,
            None,
        )
    }
}

fn prepare_run_dir(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let ck_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    fs::write(out_dir.join("config.json"), cfg.to_json_pretty()?)?;
    Ok(ck_dir)
}

fn write_report(out_dir: &Path, report: &TrainReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::runtime(format!("report serialization failed: {e}")))?;
    fs::write(out_dir.join("report.json"), text)?;
    Ok(())
}

/// Train the configured defender policy against the scripted attacker.
///
/// Writes into `out_dir`: `config.json` (echo), `metrics.jsonl`,
/// `checkpoints/step_*.ckpt`, `checkpoints/final.ckpt`, and `report.json`.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let kind = cfg.policy.kind().ok_or_else(|| {
        Error::config(format!("policy '{}' is scripted; nothing to train", cfg.policy.label()))
    })?;
    let start = std::time::Instant::now();
    let ck_dir = prepare_run_dir(cfg, out_dir)?;
    let metrics = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut defender = new_defender_learner(kind, &cfg.learner, &mut rng)?;

    let mut trainer = Trainer {
        cfg,
        rng,
        metrics,
        ck_dir: ck_dir.clone(),
        step_checkpoints: true,
        env_steps: 0,
        side_steps: [0, 0],
        episodes: 0,
        updates: 0,
        acc: StatAcc::default(),
    };
    trainer.run_phase(&mut defender, None, Side::Defender, cfg.training.total_steps, "train")?;

    defender.save(&ck_dir.join("final.ckpt"))?;
    let final_eval = trainer.eval_defender(&defender, None)?;
    let report = TrainReport {
        env_steps: trainer.env_steps,
        episodes: trainer.episodes,
        updates: trainer.updates,
        final_eval: Some(final_eval),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_report(out_dir, &report)?;
    Ok(report)
}

/// Report of one alternating-training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AltReport {
    pub phases: usize,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Defender success rate against the final attacker, per phase end.
    pub phase_success_rates: Vec<f64>,
    pub wall_seconds: f64,
}

/// Alternating two-side training: each phase freezes one side's parameters
/// and trains the other. Phase-end checkpoints of both sides are written as
/// `checkpoints/p{i}_{side}.ckpt`; the initial nets as `init_{side}.ckpt`.
pub fn alternating_train(
    cfg: &RunConfig,
    schedule: &PhaseSchedule,
    out_dir: &Path,
) -> Result<AltReport> {
    cfg.validate()?;
    schedule.validate()?;
    let kind = cfg.policy.kind().ok_or_else(|| {
        Error::config(format!("policy '{}' is scripted; nothing to train", cfg.policy.label()))
    })?;
    let start = std::time::Instant::now();
    let ck_dir = prepare_run_dir(cfg, out_dir)?;
    let metrics = MetricsWriter::create(&out_dir.join("metrics.jsonl"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut defender = new_defender_learner(kind, &cfg.learner, &mut rng)?;
    let mut attacker = new_attacker_learner(&cfg.learner, &mut rng)?;
    defender.save(&ck_dir.join("init_defender.ckpt"))?;
    attacker.save(&ck_dir.join("init_attacker.ckpt"))?;

    let mut trainer = Trainer {
        cfg,
        rng,
        metrics,
        ck_dir: ck_dir.clone(),
        step_checkpoints: false,
        env_steps: 0,
        side_steps: [0, 0],
        episodes: 0,
        updates: 0,
        acc: StatAcc::default(),
    };

    let mut phase_success_rates = Vec::with_capacity(schedule.phases.len());
    for (i, phase) in schedule.phases.iter().enumerate() {
        let label = format!("p{}_{}", i + 1, phase.side.label());
        trainer.run_phase(
            &mut defender,
            Some(&mut attacker),
            phase.side,
            phase.steps,
            &label,
        )?;
        defender.save(&ck_dir.join(format!("p{}_defender.ckpt", i + 1)))?;
        attacker.save(&ck_dir.join(format!("p{}_attacker.ckpt", i + 1)))?;
        let stats = trainer.eval_defender(&defender, Some(&attacker))?;
        phase_success_rates.push(stats.success_rate());
    }

    let report = AltReport {
        phases: schedule.phases.len(),
        env_steps: trainer.env_steps,
        episodes: trainer.episodes,
        updates: trainer.updates,
        phase_success_rates,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::runtime(format!("report serialization failed: {e}")))?;
    fs::write(out_dir.join("report.json"), text)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PolicyId;
    use tempfile::tempdir;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::desk();
        cfg.policy = PolicyId::Arboids;
        cfg.learner.embed = 4;
        cfg.learner.hidden = 6;
        cfg.learner.adapter_hidden = 4;
        cfg.learner.batch = 16;
        cfg.learner.buffer_capacity = 4_096;
        cfg.learner.warmup_steps = 20;
        cfg.training.eval_episodes = 2;
        cfg
    }

    #[test]
    fn agility_samples_respect_support_and_mean() {
        let cur = CurriculumConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let a = sample_agility(&cur, 0, &mut rng);
            assert!((1.5..2.5).contains(&a), "{a}");
            sum += a;
        }
        let mean = sum / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "LLN mean {mean}");

        // On the top plateau the support shifts with the mean.
        for _ in 0..1_000 {
            let a = sample_agility(&cur, 1_000_000, &mut rng);
            assert!((2.25..3.25).contains(&a), "{a}");
        }
    }

    #[test]
    fn warmup_only_run_writes_metrics_but_never_updates() {
        let mut cfg = tiny_cfg();
        cfg.learner.warmup_steps = 5_000;
        cfg.training.total_steps = 100;
        cfg.training.eval_every = 1_000;
        cfg.training.checkpoint_every = 1_000;
        let dir = tempdir().unwrap();
        let report = train(&cfg, dir.path()).unwrap();
        assert_eq!(report.env_steps, 100);
        assert_eq!(report.updates, 0, "warmup must not trigger gradient updates");

        let metrics = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert!(!metrics.is_empty());
        for line in metrics.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["updates"], 0);
        }
        assert!(dir.path().join("config.json").exists());
        assert!(dir.path().join("checkpoints/final.ckpt").exists());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn fixed_seed_training_is_bit_reproducible() {
        let mut cfg = tiny_cfg();
        cfg.training.total_steps = 300;
        cfg.training.eval_every = 150;
        cfg.training.checkpoint_every = 150;
        cfg.seed = 9;

        let run = || {
            let dir = tempdir().unwrap();
            train(&cfg, dir.path()).unwrap();
            let metrics = std::fs::read(dir.path().join("metrics.jsonl")).unwrap();
            let ck = std::fs::read(dir.path().join("checkpoints/final.ckpt")).unwrap();
            (metrics, ck)
        };
        let (m1, c1) = run();
        let (m2, c2) = run();
        assert_eq!(m1, m2, "metrics must be byte-identical across reruns");
        assert_eq!(c1, c2, "final checkpoint must be byte-identical across reruns");
        let text = String::from_utf8(m1).unwrap();
        assert!(text.contains("\"kind\":\"eval\""), "eval rows expected:\n{text}");
        assert!(text.contains("\"kind\":\"episode\""), "episode rows expected:\n{text}");
    }

    #[test]
    fn training_produces_updates_after_warmup() {
        let mut cfg = tiny_cfg();
        cfg.training.total_steps = 60;
        cfg.training.eval_every = 1_000;
        cfg.training.checkpoint_every = 1_000;
        cfg.learner.warmup_steps = 5;
        let dir = tempdir().unwrap();
        let report = train(&cfg, dir.path()).unwrap();
        assert!(report.updates > 0);
        assert!(report.final_eval.is_some());
    }

    #[test]
    fn scripted_policies_cannot_be_trained() {
        let mut cfg = tiny_cfg();
        cfg.policy = PolicyId::Boids;
        let dir = tempdir().unwrap();
        let err = train(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("scripted"), "{err}");
    }

    #[test]
    fn schedule_validation_rejects_non_alternating_plans() {
        assert!(PhaseSchedule::alternating(5, 100).validate().is_ok());
        assert!(PhaseSchedule { phases: vec![] }.validate().is_err());
        let repeated = PhaseSchedule {
            phases: vec![
                Phase { side: Side::Defender, steps: 10 },
                Phase { side: Side::Defender, steps: 10 },
            ],
        };
        let err = repeated.validate().unwrap_err();
        assert!(err.to_string().contains("alternate"), "{err}");
        let zero = PhaseSchedule { phases: vec![Phase { side: Side::Defender, steps: 0 }] };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn alternating_phases_freeze_the_idle_side_bit_exactly() {
        let mut cfg = tiny_cfg();
        cfg.learner.warmup_steps = 5;
        cfg.training.eval_every = 10_000;
        cfg.training.eval_episodes = 1;
        let schedule = PhaseSchedule::alternating(2, 60);
        let dir = tempdir().unwrap();
        let report = alternating_train(&cfg, &schedule, dir.path()).unwrap();
        assert_eq!(report.phases, 2);
        assert_eq!(report.env_steps, 120);
        assert!(report.updates > 0);

        let ck = |name: &str| std::fs::read(dir.path().join("checkpoints").join(name)).unwrap();
        // Phase 1 trains the defender: attacker bytes must be untouched.
        assert_eq!(ck("init_attacker.ckpt"), ck("p1_attacker.ckpt"));
        assert_ne!(ck("init_defender.ckpt"), ck("p1_defender.ckpt"));
        // Phase 2 trains the attacker: defender bytes must be untouched.
        assert_eq!(ck("p1_defender.ckpt"), ck("p2_defender.ckpt"));
        assert_ne!(ck("p1_attacker.ckpt"), ck("p2_attacker.ckpt"));
    }
}
