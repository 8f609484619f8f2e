//! Versioned run configuration: one JSON document that fixes every knob of an
//! experiment (environment, heuristics, learner, curriculum, schedule), so a
//! run is reproducible from its config echo plus a seed.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::apf::ApfParams;
use crate::boids::BoidsConfig;
use crate::env::EngagementConfig;
use crate::error::{Error, Result};
use crate::sac::{LearnerConfig, PolicyKind};

pub const CONFIG_VERSION: u32 = 1;

/// Which defender policy a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    /// Scripted flocking baseline; no learning.
    Boids,
    /// Scripted potential-field pursuit baseline; no learning.
    Apf,
    /// Residual policy: learned action added to the heuristic, then clipped.
    Rp,
    /// Plain SAC on the raw observation, no heuristic input.
    VanillaSac,
    /// Adaptive-residual policy with a learned blend weight.
    Arboids,
}

impl PolicyId {
    pub fn label(self) -> &'static str {
        match self {
            PolicyId::Boids => "boids",
            PolicyId::Apf => "apf",
            PolicyId::Rp => "rp",
            PolicyId::VanillaSac => "vanilla_sac",
            PolicyId::Arboids => "arboids",
        }
    }

    /// The learner variant backing this policy, if it is a trained one.
    pub fn kind(self) -> Option<PolicyKind> {
        match self {
            PolicyId::Boids | PolicyId::Apf => None,
            PolicyId::Rp => Some(PolicyKind::Rp),
            PolicyId::VanillaSac => Some(PolicyKind::VanillaSac),
            PolicyId::Arboids => Some(PolicyKind::Arboids),
        }
    }

    pub fn is_learned(self) -> bool {
        self.kind().is_some()
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boids" => Ok(PolicyId::Boids),
            "apf" => Ok(PolicyId::Apf),
            "rp" => Ok(PolicyId::Rp),
            "vanilla_sac" => Ok(PolicyId::VanillaSac),
            "arboids" => Ok(PolicyId::Arboids),
            other => Err(Error::config(format!(
                "unknown policy '{other}' (expected boids|apf|rp|vanilla_sac|arboids)"
            ))),
        }
    }
}

/// Attacker-agility curriculum: the sampling mean starts at `initial_mean`
/// and rises by `increment` every `steps_per_increment` environment decision
/// steps, up to `max_increments` raises; per-episode agility is uniform in
/// `mean +- half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Ablation switch; when false every episode uses `engagement.agility`.
    pub enabled: bool,
    pub initial_mean: f64,
    pub increment: f64,
    pub steps_per_increment: u64,
    pub max_increments: u32,
    pub half_width: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            initial_mean: 2.0,
            increment: 0.25,
            steps_per_increment: 250_000,
            max_increments: 3,
            half_width: 0.5,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_increment == 0 {
            return Err(Error::config("curriculum.steps_per_increment must be positive"));
        }
        for (name, v) in [
            ("curriculum.initial_mean", self.initial_mean),
            ("curriculum.increment", self.increment),
            ("curriculum.half_width", self.half_width),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let lo = self.initial_mean - self.half_width;
        if lo <= 0.0 {
            return Err(Error::config(format!(
                "curriculum lower agility bound must stay positive, got {lo}"
            )));
        }
        Ok(())
    }

    /// Plateau mean after `step` environment decision steps.
    pub fn mean_at(&self, step: u64) -> f64 {
        let raises = (step / self.steps_per_increment).min(self.max_increments as u64);
        self.initial_mean + self.increment * raises as f64
    }
}

/// Step budget and logging cadence of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Total environment decision steps (episodes are cut to fit).
    pub total_steps: u64,
    /// Evaluate the greedy policy every this many decision steps.
    pub eval_every: u64,
    /// Episodes per evaluation window.
    pub eval_episodes: u32,
    /// Write a step-tagged checkpoint every this many decision steps.
    pub checkpoint_every: u64,
    /// Agility used for evaluation windows; defaults to `engagement.agility`.
    pub eval_agility: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_steps: 1_000_000,
            eval_every: 5_000,
            eval_episodes: 20,
            checkpoint_every: 50_000,
            eval_agility: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::config("training.total_steps must be positive"));
        }
        for (name, v) in [
            ("training.eval_every", self.eval_every),
            ("training.checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("training.eval_episodes must be positive"));
        }
        if let Some(a) = self.eval_agility {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::config(format!(
                    "training.eval_agility must be positive, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Complete description of a run. An empty JSON object (`{}`) parses to the
/// full-scale defaults; unknown keys are rejected by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub policy: PolicyId,
    pub engagement: EngagementConfig,
    pub boids: BoidsConfig,
    pub apf: ApfParams,
    pub learner: LearnerConfig,
    pub curriculum: CurriculumConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            policy: PolicyId::Arboids,
            engagement: EngagementConfig::default(),
            boids: BoidsConfig::default(),
            apf: ApfParams::default(),
            learner: LearnerConfig::default(),
            curriculum: CurriculumConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    /// Small-scale profile: reduced networks, buffer, and step budget so a
    /// full training run finishes in minutes on one core while keeping the
    /// same environment and reward structure. Trains and evaluates at the
    /// fixed configured agility (no curriculum).
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.learner.embed = 16;
        cfg.learner.hidden = 32;
        cfg.learner.adapter_hidden = 16;
        cfg.learner.batch = 128;
        cfg.learner.buffer_capacity = 100_000;
        cfg.learner.warmup_steps = 1_000;
        // Small batches on short budgets need a faster step size, gentler
        // TD targets, persistent blend-weight exploration, and a slow
        // adapter; without these the blend weight collapses to the
        // heuristic before the action head has learned anything.
        cfg.learner.lr = 3e-4;
        cfg.learner.reward_scale = 0.05;
        cfg.learner.theta_noise_std = 0.3;
        cfg.learner.adapter_lr_scale = 0.1;
        cfg.curriculum.enabled = false;
        cfg.curriculum.steps_per_increment = 25_000;
        cfg.training.total_steps = 100_000;
        cfg.training.eval_every = 2_500;
        cfg.training.eval_episodes = 20;
        cfg.training.checkpoint_every = 25_000;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (this build reads version {CONFIG_VERSION})",
                self.version
            )));
        }
        self.engagement.validate()?;
        self.boids.validate()?;
        self.apf.validate()?;
        self.learner.validate()?;
        self.curriculum.validate()?;
        self.training.validate()?;
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::runtime(format!("config serialization failed: {e}")))
    }
}

/// Parse and validate a JSON run config from `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse and validate a JSON run config from a string.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| Error::config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
