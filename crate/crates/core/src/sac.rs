//! Soft actor-critic learner with the adaptive residual blend: a squashed
//! Gaussian policy head plus an adapter that weighs the learned action
//! against the Boids heuristic, twin critics with polyak-averaged targets,
//! auto-tuned temperature, and a shared ring replay buffer fed by every
//! defender (parameter sharing).

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::apf::AttackerObservation;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::actor::{normal_matrix, ActorNet, ActorSpec, ObsBatch, ACTION_DIM};
use crate::nn::checkpoint::{self, Checkpoint, TensorRecord};
use crate::nn::critic::{soft_update, CriticNet, CriticSpec};
use crate::nn::dense::Dense;
use crate::nn::{Adam, Real};

/// Width of the Boids block inside a defender observation.
pub const S_BOIDS_DIM: usize = 8;
/// Offset of the Boids action inside the Boids block (after three forces).
const A_BOIDS_OFFSET: usize = 6;

/// Which action composition the learner trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Adaptive residual: a_exec = theta * a_drl + (1 - theta) * a_boids.
    Arboids,
    /// Fixed residual: a_exec = clip(a_drl + a_boids), no adapter.
    Rp,
    /// Plain SAC: Boids block dropped from the observation, a_exec = a_drl.
    VanillaSac,
}

impl PolicyKind {
    /// Whether observations keep the Boids block.
    pub fn uses_boids_obs(self) -> bool {
        !matches!(self, PolicyKind::VanillaSac)
    }

    pub fn has_adapter(self) -> bool {
        matches!(self, PolicyKind::Arboids)
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Arboids => "arboids",
            PolicyKind::Rp => "rp",
            PolicyKind::VanillaSac => "vanilla_sac",
        }
    }
}

/// Compose the executed action from the learned and heuristic parts.
/// Components are clipped to [-1, 1] afterwards; at theta = 0 or 1 the
/// result equals the corresponding input exactly.
pub fn blend(kind: PolicyKind, theta: f64, a_drl: [f64; 2], a_boids: [f64; 2]) -> [f64; 2] {
    let raw = match kind {
        PolicyKind::Arboids => [
            theta * a_drl[0] + (1.0 - theta) * a_boids[0],
            theta * a_drl[1] + (1.0 - theta) * a_boids[1],
        ],
        PolicyKind::Rp => [a_drl[0] + a_boids[0], a_drl[1] + a_boids[1]],
        PolicyKind::VanillaSac => a_drl,
    };
    [raw[0].clamp(-1.0, 1.0), raw[1].clamp(-1.0, 1.0)]
}

/// Exploration noise on the blend weight: clip(theta + noise, 0, 1).
pub fn noisy_theta(theta: f64, noise: f64) -> f64 {
    (theta + noise).clamp(0.0, 1.0)
}

/// Hyperparameters of the learner. Network widths live here too so one
/// config block pins the whole training setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub polyak_tau: f64,
    pub target_entropy: f64,
    pub warmup_steps: u64,
    pub updates_per_step: u32,
    pub theta_noise_std: f64,
    pub init_alpha: f64,
    /// Rewards are multiplied by this inside the TD targets, so the critics
    /// regress returns on a gentler scale; the environment rewards themselves
    /// are untouched.
    pub reward_scale: f64,
    /// Step-size multiplier for the adapter head relative to `lr`. A slow
    /// adapter keeps the blend weight exploring mid-range while the action
    /// head is still learning, instead of slamming to "all heuristic" on
    /// early data.
    pub adapter_lr_scale: f64,
    pub embed: usize,
    pub hidden: usize,
    pub adapter_hidden: usize,
    pub adapter_tap_last: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            batch: 4096,
            buffer_capacity: 1_000_000,
            polyak_tau: 0.005,
            target_entropy: -2.0,
            warmup_steps: 5000,
            updates_per_step: 1,
            theta_noise_std: 0.1,
            init_alpha: 0.2,
            reward_scale: 1.0,
            adapter_lr_scale: 1.0,
            embed: 64,
            hidden: 256,
            adapter_hidden: 64,
            adapter_tap_last: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive and finite"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be positive"));
        }
        if self.buffer_capacity < self.batch {
            return Err(Error::config("buffer_capacity must be at least batch"));
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return Err(Error::config("polyak_tau must lie in (0, 1]"));
        }
        if !(self.theta_noise_std >= 0.0 && self.theta_noise_std.is_finite()) {
            return Err(Error::config("theta_noise_std must be nonnegative"));
        }
        if !(self.init_alpha > 0.0 && self.init_alpha.is_finite()) {
            return Err(Error::config("init_alpha must be positive"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward_scale must be positive"));
        }
        if !(self.adapter_lr_scale > 0.0 && self.adapter_lr_scale.is_finite()) {
            return Err(Error::config("adapter_lr_scale must be positive"));
        }
        if self.embed == 0 || self.hidden == 0 || self.adapter_hidden == 0 {
            return Err(Error::config("network widths must be positive"));
        }
        if self.updates_per_step == 0 {
            return Err(Error::config("updates_per_step must be positive"));
        }
        Ok(())
    }
}

/// One flattened observation: the attacker/target block, the optional Boids
/// block, and a variable-length teammate block (`team_dim` values per item).
#[derive(Debug, Clone, PartialEq)]
pub struct FlatObs<T> {
    pub at: Vec<T>,
    pub boids: Vec<T>,
    pub team: Vec<T>,
}

/// Flatten a defender observation; the Boids block is dropped for policies
/// that do not see it.
pub fn flatten_defender_obs<T: Real>(obs: &Observation, kind: PolicyKind) -> FlatObs<T> {
    let at = obs.at.iter().map(|&v| T::from_f64(v)).collect();
    let boids = if kind.uses_boids_obs() {
        obs.boids.iter().map(|&v| T::from_f64(v)).collect()
    } else {
        Vec::new()
    };
    let mut team = Vec::with_capacity(2 * obs.teammates.len());
    for &(bearing, dist) in &obs.teammates {
        team.push(T::from_f64(bearing));
        team.push(T::from_f64(dist));
    }
    FlatObs { at, boids, team }
}

/// Flatten an attacker observation. The attacker has no Boids baseline, so
/// its Boids block is always empty.
pub fn flatten_attacker_obs<T: Real>(obs: &AttackerObservation) -> FlatObs<T> {
    let at = obs.target.iter().map(|&v| T::from_f64(v)).collect();
    let mut team = Vec::with_capacity(2 * obs.defenders.len());
    for &(bearing, dist) in &obs.defenders {
        team.push(T::from_f64(bearing));
        team.push(T::from_f64(dist));
    }
    FlatObs { at, boids: Vec::new(), team }
}

/// One stored experience. `theta` is the executed (noise-included) blend
/// weight; `a_boids` is the heuristic action at `obs`. The heuristic action
/// at `next_obs` is read back from its Boids block, which carries it.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub obs: FlatObs<T>,
    pub a_drl: [T; ACTION_DIM],
    pub theta: T,
    pub reward: T,
    pub next_obs: FlatObs<T>,
    pub done: bool,
    pub a_boids: [T; ACTION_DIM],
}

/// Fixed-capacity ring buffer shared by all homogeneous agents.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    data: Vec<Transition<T>>,
    capacity: usize,
    next: usize,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self { data: Vec::new(), capacity, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, evicting the oldest entry once full.
    pub fn push(&mut self, t: Transition<T>) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition<T> {
        &self.data[i]
    }

    /// Uniform sample of distinct indices.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(Error::runtime("cannot sample an empty batch"));
        }
        if batch > self.data.len() {
            return Err(Error::runtime(format!(
                "batch {} exceeds buffer occupancy {}",
                batch,
                self.data.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.data.len(), batch).into_vec())
    }
}

/// Action-selection mode: `Train` samples the Gaussian head and perturbs
/// theta; `Eval` takes tanh(mean) and the raw theta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Output of action selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionChoice {
    /// Blended action actually applied to the vessel, in [-1, 1]^2.
    pub a_exec: [f64; 2],
    /// Raw network action (pre-blend), strictly inside (-1, 1)^2.
    pub a_drl: [f64; 2],
    /// Blend weight used, in [0, 1] (1 for policies without an adapter).
    pub theta: f64,
}

/// Scalars reported by one actor/adapter update.
#[derive(Debug, Clone, Copy)]
pub struct ActorStats {
    pub loss: f64,
    pub mean_logp: f64,
    pub mean_theta: f64,
}

/// Scalars reported by one full update step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub critic_loss: [f64; 2],
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_theta: f64,
    pub mean_entropy: f64,
}

/// Column-major batch view of a set of sampled transitions.
struct Batch<T> {
    obs: ObsBatch<T>,
    next: ObsBatch<T>,
    a: Array2<T>,
    theta: Array1<T>,
    a_boids: Array2<T>,
    next_a_boids: Array2<T>,
    reward: Vec<T>,
    done: Vec<bool>,
}

const LOG_ALPHA_MIN: f64 = -30.0;
const LOG_ALPHA_MAX: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct Learner<T: Real> {
    pub kind: PolicyKind,
    pub cfg: LearnerConfig,
    pub at_dim: usize,
    pub team_dim: usize,
    pub actor: ActorNet<T>,
    pub q1: CriticNet<T>,
    pub q2: CriticNet<T>,
    pub q1_target: CriticNet<T>,
    pub q2_target: CriticNet<T>,
    pub log_alpha: f64,
    pub buffer: ReplayBuffer<T>,
    opt_actor: Adam<T>,
    opt_q1: Adam<T>,
    opt_q2: Adam<T>,
    alpha_m: f64,
    alpha_v: f64,
    alpha_t: u64,
}

impl<T: Real> Learner<T> {
    /// Fresh learner with the given observation geometry. `at_dim` is the
    /// width of the attacker/target block (4 for defenders, 2 for the
    /// attacker), `team_dim` the per-item width of the mean-embedded block.
    pub fn new<R: Rng + ?Sized>(
        kind: PolicyKind,
        at_dim: usize,
        team_dim: usize,
        cfg: LearnerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let boids_dim = if kind.uses_boids_obs() { S_BOIDS_DIM } else { 0 };
        let actor_spec = ActorSpec {
            at_dim,
            team_dim,
            boids_dim,
            embed: cfg.embed,
            hidden: cfg.hidden,
            adapter_hidden: cfg.adapter_hidden,
            has_adapter: kind.has_adapter(),
            adapter_tap_last: cfg.adapter_tap_last,
        };
        let critic_spec = CriticSpec {
            at_dim,
            team_dim,
            boids_dim,
            embed: cfg.embed,
            hidden: cfg.hidden,
        };
        let actor = ActorNet::new(actor_spec, rng);
        let q1 = CriticNet::new(critic_spec, rng);
        let q2 = CriticNet::new(critic_spec, rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        let lr = cfg.lr;
        let adapter_scale = cfg.adapter_lr_scale;
        let log_alpha = cfg.init_alpha.ln();
        Ok(Self {
            kind,
            cfg,
            at_dim,
            team_dim,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            buffer,
            opt_actor: {
                let mut opt = Adam::new(lr);
                opt.lr_prefix_scales = vec![("adapter".into(), adapter_scale)];
                opt
            },
            opt_q1: Adam::new(lr),
            opt_q2: Adam::new(lr),
            alpha_m: 0.0,
            alpha_v: 0.0,
            alpha_t: 0,
        })
    }

    pub fn boids_dim(&self) -> usize {
        if self.kind.uses_boids_obs() {
            S_BOIDS_DIM
        } else {
            0
        }
    }

    /// Number of gradient updates applied so far (Adam step count).
    pub fn updates(&self) -> u64 {
        self.opt_q1.t
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn check_obs(&self, o: &FlatObs<T>) -> Result<()> {
        if o.at.len() != self.at_dim {
            return Err(Error::runtime("observation at-block width mismatch"));
        }
        if o.boids.len() != self.boids_dim() {
            return Err(Error::runtime("observation boids-block width mismatch"));
        }
        if o.team.len() % self.team_dim != 0 {
            return Err(Error::runtime("observation team block not a whole number of items"));
        }
        Ok(())
    }

    /// Store one transition, validating its geometry and ranges.
    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        self.check_obs(&t.obs)?;
        self.check_obs(&t.next_obs)?;
        let th = t.theta.into_f64();
        if !(0.0..=1.0).contains(&th) {
            return Err(Error::runtime("stored theta outside [0, 1]"));
        }
        for v in t.a_drl {
            let v = v.into_f64();
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::runtime("stored a_drl outside [-1, 1]"));
            }
        }
        if !t.reward.into_f64().is_finite() {
            return Err(Error::runtime("non-finite reward"));
        }
        self.buffer.push(t);
        Ok(())
    }

    fn single_batch(&self, obs: &FlatObs<T>) -> ObsBatch<T> {
        let k = obs.team.len() / self.team_dim;
        ObsBatch {
            at: Array2::from_shape_vec((1, self.at_dim), obs.at.clone()).expect("at shape"),
            boids: Array2::from_shape_vec((1, self.boids_dim()), obs.boids.clone())
                .expect("boids shape"),
            team: Array2::from_shape_vec((k, self.team_dim), obs.team.clone())
                .expect("team shape"),
            team_offsets: vec![0, k],
        }
    }

    /// Pick the action for one observation. Train mode samples the Gaussian
    /// head and adds clipped noise to theta; eval mode is deterministic.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &FlatObs<T>,
        a_boids: [f64; 2],
        mode: Mode,
        rng: &mut R,
    ) -> Result<ActionChoice> {
        self.check_obs(obs)?;
        let batch = self.single_batch(obs);
        let a_boids_m = Array2::from_shape_vec(
            (1, ACTION_DIM),
            a_boids.iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("a_boids shape");
        let xi = match mode {
            Mode::Train => normal_matrix(1, ACTION_DIM, rng),
            Mode::Eval => Array2::zeros((1, ACTION_DIM)),
        };
        let cache = self.actor.forward(&batch, &a_boids_m, &xi);
        let a_drl = [
            cache.sample.a[(0, 0)].into_f64(),
            cache.sample.a[(0, 1)].into_f64(),
        ];
        let theta_net = cache.theta_or_one()[0].into_f64();
        let theta = match (self.kind, mode) {
            (PolicyKind::Arboids, Mode::Train) => {
                let noise: f64 = StandardNormal.sample(rng);
                noisy_theta(theta_net, noise * self.cfg.theta_noise_std)
            }
            _ => theta_net,
        };
        Ok(ActionChoice { a_exec: blend(self.kind, theta, a_drl, a_boids), a_drl, theta })
    }

    /// Heuristic action at a stored observation's successor, read back from
    /// its Boids block (zero when the block is absent).
    fn stored_next_a_boids(&self, t: &Transition<T>) -> [T; ACTION_DIM] {
        if self.boids_dim() == S_BOIDS_DIM {
            [t.next_obs.boids[A_BOIDS_OFFSET], t.next_obs.boids[A_BOIDS_OFFSET + 1]]
        } else {
            [T::zero(), T::zero()]
        }
    }

    fn obs_batch(&self, idxs: &[usize], use_next: bool) -> ObsBatch<T> {
        let b = idxs.len();
        let boids_dim = self.boids_dim();
        let mut at = Array2::zeros((b, self.at_dim));
        let mut boids = Array2::zeros((b, boids_dim));
        let mut offsets = Vec::with_capacity(b + 1);
        offsets.push(0usize);
        let mut total = 0usize;
        for &i in idxs {
            let o = if use_next { &self.buffer.get(i).next_obs } else { &self.buffer.get(i).obs };
            total += o.team.len() / self.team_dim;
            offsets.push(total);
        }
        let mut team = Array2::zeros((total, self.team_dim));
        for (row, &i) in idxs.iter().enumerate() {
            let o = if use_next { &self.buffer.get(i).next_obs } else { &self.buffer.get(i).obs };
            for (j, &v) in o.at.iter().enumerate() {
                at[(row, j)] = v;
            }
            for (j, &v) in o.boids.iter().enumerate() {
                boids[(row, j)] = v;
            }
            let start = offsets[row];
            for (j, &v) in o.team.iter().enumerate() {
                team[(start + j / self.team_dim, j % self.team_dim)] = v;
            }
        }
        ObsBatch { at, boids, team, team_offsets: offsets }
    }

    fn assemble(&self, idxs: &[usize]) -> Batch<T> {
        let b = idxs.len();
        let mut a = Array2::zeros((b, ACTION_DIM));
        let mut a_boids = Array2::zeros((b, ACTION_DIM));
        let mut next_a_boids = Array2::zeros((b, ACTION_DIM));
        let mut theta = Array1::zeros(b);
        let mut reward = Vec::with_capacity(b);
        let mut done = Vec::with_capacity(b);
        for (row, &i) in idxs.iter().enumerate() {
            let t = self.buffer.get(i);
            for j in 0..ACTION_DIM {
                a[(row, j)] = t.a_drl[j];
                a_boids[(row, j)] = t.a_boids[j];
            }
            let nb = self.stored_next_a_boids(t);
            for j in 0..ACTION_DIM {
                next_a_boids[(row, j)] = nb[j];
            }
            theta[row] = t.theta;
            reward.push(t.reward);
            done.push(t.done);
        }
        Batch {
            obs: self.obs_batch(idxs, false),
            next: self.obs_batch(idxs, true),
            a,
            theta,
            a_boids,
            next_a_boids,
            reward,
            done,
        }
    }

    /// Bootstrap targets y = r + gamma * (1 - done) * (min(Q1', Q2') - alpha
    /// * log pi), with next actions sampled from the current actor and theta
    /// re-derived without exploration noise.
    fn target_values<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Array1<T> {
        let b = batch.done.len();
        let xi = normal_matrix(b, ACTION_DIM, rng);
        let cache = self.actor.forward(&batch.next, &batch.next_a_boids, &xi);
        let theta = cache.theta_or_one();
        let (q1, _) = self.q1_target.forward(&batch.next, &cache.sample.a, &theta);
        let (q2, _) = self.q2_target.forward(&batch.next, &cache.sample.a, &theta);
        let gamma = T::from_f64(self.cfg.gamma);
        let alpha = T::from_f64(self.alpha());
        let scale = T::from_f64(self.cfg.reward_scale);
        let mut y = Array1::zeros(b);
        for i in 0..b {
            let qmin = if q1[i] <= q2[i] { q1[i] } else { q2[i] };
            let not_done = if batch.done[i] { T::zero() } else { T::one() };
            y[i] = scale * batch.reward[i]
                + gamma * not_done * (qmin - alpha * cache.sample.log_prob[i]);
        }
        y
    }

    /// Bootstrap targets for a sampled index set (exposed for inspection).
    pub fn critic_targets<R: Rng + ?Sized>(
        &self,
        idxs: &[usize],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if idxs.is_empty() {
            return Err(Error::runtime("empty batch"));
        }
        let batch = self.assemble(idxs);
        Ok(self.target_values(&batch, rng).iter().map(|v| v.into_f64()).collect())
    }

    /// One squared-error regression step for each critic. Returns the two
    /// pre-step losses.
    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        idxs: &[usize],
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if idxs.is_empty() {
            return Err(Error::runtime("empty batch"));
        }
        let batch = self.assemble(idxs);
        let y = self.target_values(&batch, rng);
        let b = idxs.len();
        let inv_b = T::from_f64(1.0 / b as f64);
        let two = T::from_f64(2.0);

        let mut losses = [0.0f64; 2];
        for which in 0..2 {
            let (net, opt) = if which == 0 {
                (&mut self.q1, &mut self.opt_q1)
            } else {
                (&mut self.q2, &mut self.opt_q2)
            };
            net.zero_grads();
            let (q, cache) = net.forward(&batch.obs, &batch.a, &batch.theta);
            let mut dq = Array1::zeros(b);
            let mut loss = 0.0f64;
            for i in 0..b {
                let diff = q[i] - y[i];
                loss += diff.into_f64() * diff.into_f64();
                dq[i] = two * diff * inv_b;
            }
            losses[which] = loss / b as f64;
            net.backward(&cache, &dq);
            opt.step(net.layers_mut());
        }
        Ok((losses[0], losses[1]))
    }

    /// Actor/adapter loss at fixed noise, forward only (finite-difference
    /// probes use this).
    pub fn actor_loss_at(&self, obs: &ObsBatch<T>, a_boids: &Array2<T>, xi: &Array2<T>) -> f64 {
        let cache = self.actor.forward(obs, a_boids, xi);
        let theta = cache.theta_or_one();
        let (q1, _) = self.q1.forward(obs, &cache.sample.a, &theta);
        let (q2, _) = self.q2.forward(obs, &cache.sample.a, &theta);
        let alpha = self.alpha();
        let b = obs.batch();
        let mut loss = 0.0;
        for i in 0..b {
            let qmin = if q1[i] <= q2[i] { q1[i] } else { q2[i] };
            loss += alpha * cache.sample.log_prob[i].into_f64() - qmin.into_f64();
        }
        loss / b as f64
    }

    /// Compute actor/adapter gradients for loss = mean(alpha * log pi -
    /// min(Q1, Q2)) at the given noise, leaving them in the actor layers
    /// without an optimizer step.
    fn actor_grads(&mut self, batch: &Batch<T>, xi: &Array2<T>) -> ActorStats {
        let b = batch.done.len();
        let inv_b = 1.0 / b as f64;
        let cache = self.actor.forward(&batch.obs, &batch.a_boids, xi);
        let theta = cache.theta_or_one();
        // Q passes through the online critics; their parameter grads are
        // scratch here and get re-zeroed by the next critic update.
        self.q1.zero_grads();
        self.q2.zero_grads();
        let (q1, c1) = self.q1.forward(&batch.obs, &cache.sample.a, &theta);
        let (q2, c2) = self.q2.forward(&batch.obs, &cache.sample.a, &theta);

        let alpha = self.alpha();
        let mut loss = 0.0;
        let mut mean_logp = 0.0;
        let mut dq1 = Array1::zeros(b);
        let mut dq2 = Array1::zeros(b);
        let neg_inv_b = T::from_f64(-inv_b);
        for i in 0..b {
            let lp = cache.sample.log_prob[i].into_f64();
            mean_logp += lp * inv_b;
            // Subgradient of the min: route through whichever critic is
            // active, q1 on ties.
            if q1[i] <= q2[i] {
                loss += (alpha * lp - q1[i].into_f64()) * inv_b;
                dq1[i] = neg_inv_b;
            } else {
                loss += (alpha * lp - q2[i].into_f64()) * inv_b;
                dq2[i] = neg_inv_b;
            }
        }
        let (da1, dth1) = self.q1.backward(&c1, &dq1);
        let (da2, dth2) = self.q2.backward(&c2, &dq2);
        let g_a = da1 + da2;
        let g_theta = dth1 + dth2;
        let g_logp = Array1::from_elem(b, T::from_f64(alpha * inv_b));

        self.actor.zero_grads();
        let g_theta_opt = self.kind.has_adapter().then_some(&g_theta);
        self.actor.backward(&cache, &g_a, &g_logp, g_theta_opt);

        let mean_theta = theta.iter().map(|v| v.into_f64()).sum::<f64>() * inv_b;
        ActorStats { loss, mean_logp, mean_theta }
    }

    /// One joint update of the policy, embeddings, and adapter.
    pub fn actor_adapter_update<R: Rng + ?Sized>(
        &mut self,
        idxs: &[usize],
        rng: &mut R,
    ) -> Result<ActorStats> {
        if idxs.is_empty() {
            return Err(Error::runtime("empty batch"));
        }
        let batch = self.assemble(idxs);
        let xi = normal_matrix(idxs.len(), ACTION_DIM, rng);
        let stats = self.actor_grads(&batch, &xi);
        self.opt_actor.step(self.actor.layers_mut());
        Ok(stats)
    }

    /// Move log alpha toward E[-log pi] = H_target given the batch's mean
    /// log-probability. Returns the new alpha.
    pub fn temperature_step_with(&mut self, mean_logp: f64) -> f64 {
        // d/d(log alpha) of -log alpha * (mean_logp + H_target).
        let g = -(mean_logp + self.cfg.target_entropy);
        self.alpha_t += 1;
        self.alpha_m = 0.9 * self.alpha_m + 0.1 * g;
        self.alpha_v = 0.999 * self.alpha_v + 0.001 * g * g;
        let corr = (1.0 - 0.999f64.powi(self.alpha_t as i32)).sqrt()
            / (1.0 - 0.9f64.powi(self.alpha_t as i32));
        self.log_alpha -= self.cfg.lr * corr * self.alpha_m / (self.alpha_v.sqrt() + 1e-8);
        self.log_alpha = self.log_alpha.clamp(LOG_ALPHA_MIN, LOG_ALPHA_MAX);
        self.alpha()
    }

    /// Standalone temperature update from a fresh policy evaluation.
    pub fn temperature_update<R: Rng + ?Sized>(
        &mut self,
        idxs: &[usize],
        rng: &mut R,
    ) -> Result<f64> {
        if idxs.is_empty() {
            return Err(Error::runtime("empty batch"));
        }
        let batch = self.assemble(idxs);
        let xi = normal_matrix(idxs.len(), ACTION_DIM, rng);
        let cache = self.actor.forward(&batch.obs, &batch.a_boids, &xi);
        let mean_logp = cache.sample.log_prob.iter().map(|v| v.into_f64()).sum::<f64>()
            / idxs.len() as f64;
        Ok(self.temperature_step_with(mean_logp))
    }

    /// One full gradient step: sample a batch, update critics, actor, and
    /// temperature, then polyak-average the targets.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<UpdateStats> {
        let idxs = self.buffer.sample_indices(self.cfg.batch, rng)?;
        let (l1, l2) = self.critic_update(&idxs, rng)?;
        let stats = self.actor_adapter_update(&idxs, rng)?;
        let alpha = self.temperature_step_with(stats.mean_logp);
        soft_update(&mut self.q1_target, &self.q1, self.cfg.polyak_tau)?;
        soft_update(&mut self.q2_target, &self.q2, self.cfg.polyak_tau)?;
        Ok(UpdateStats {
            critic_loss: [l1, l2],
            actor_loss: stats.loss,
            alpha,
            mean_theta: stats.mean_theta,
            mean_entropy: -stats.mean_logp,
        })
    }

    fn kind_code(kind: PolicyKind) -> f32 {
        match kind {
            PolicyKind::Arboids => 0.0,
            PolicyKind::Rp => 1.0,
            PolicyKind::VanillaSac => 2.0,
        }
    }

    fn kind_from_code(code: f32) -> Result<PolicyKind> {
        match code as i64 {
            0 => Ok(PolicyKind::Arboids),
            1 => Ok(PolicyKind::Rp),
            2 => Ok(PolicyKind::VanillaSac),
            _ => Err(Error::checkpoint("unknown policy kind code")),
        }
    }

    /// Serialize networks, optimizer state, and temperature.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck: Checkpoint = BTreeMap::new();
        let nets: [(&str, Vec<(String, &Dense<T>)>); 5] = [
            ("actor", self.actor.layers()),
            ("q1", self.q1.layers()),
            ("q2", self.q2.layers()),
            ("q1t", self.q1_target.layers()),
            ("q2t", self.q2_target.layers()),
        ];
        for (prefix, layers) in nets {
            for (name, layer) in layers {
                ck.insert(
                    format!("{prefix}/{name}/w"),
                    TensorRecord {
                        shape: vec![layer.in_dim(), layer.out_dim()],
                        data: layer.w.iter().map(|v| v.into_f64() as f32).collect(),
                    },
                );
                ck.insert(
                    format!("{prefix}/{name}/b"),
                    TensorRecord {
                        shape: vec![layer.out_dim()],
                        data: layer.b.iter().map(|v| v.into_f64() as f32).collect(),
                    },
                );
            }
        }
        let opts: [(&str, &Adam<T>); 3] =
            [("actor", &self.opt_actor), ("q1", &self.opt_q1), ("q2", &self.opt_q2)];
        for (prefix, opt) in opts {
            let (m, v) = opt.moments();
            for (slot, vals) in m.iter().enumerate() {
                ck.insert(
                    format!("opt/{prefix}/{slot}/m"),
                    TensorRecord::vector(vals.iter().map(|x| x.into_f64() as f32).collect()),
                );
            }
            for (slot, vals) in v.iter().enumerate() {
                ck.insert(
                    format!("opt/{prefix}/{slot}/v"),
                    TensorRecord::vector(vals.iter().map(|x| x.into_f64() as f32).collect()),
                );
            }
            ck.insert(format!("opt/{prefix}/t"), TensorRecord::scalar(opt.t as f32));
        }
        ck.insert("meta/version".into(), TensorRecord::scalar(1.0));
        ck.insert("meta/kind".into(), TensorRecord::scalar(Self::kind_code(self.kind)));
        ck.insert(
            "meta/dims".into(),
            TensorRecord::vector(vec![
                self.at_dim as f32,
                self.team_dim as f32,
                self.boids_dim() as f32,
                self.cfg.embed as f32,
                self.cfg.hidden as f32,
                self.cfg.adapter_hidden as f32,
                if self.cfg.adapter_tap_last { 1.0 } else { 0.0 },
            ]),
        );
        ck.insert("train/log_alpha".into(), TensorRecord::scalar(self.log_alpha as f32));
        ck.insert(
            "train/alpha_opt".into(),
            TensorRecord::vector(vec![
                self.alpha_m as f32,
                self.alpha_v as f32,
                self.alpha_t as f32,
            ]),
        );
        ck
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.to_checkpoint())
    }

    fn read_net(
        ck: &Checkpoint,
        prefix: &str,
        layers: Vec<(String, &mut Dense<T>)>,
    ) -> Result<()> {
        for (name, layer) in layers {
            let w = checkpoint::require(ck, &format!("{prefix}/{name}/w"))?;
            if w.shape != [layer.in_dim(), layer.out_dim()] {
                return Err(Error::checkpoint(format!(
                    "tensor {prefix}/{name}/w has shape {:?}, expected {:?}",
                    w.shape,
                    [layer.in_dim(), layer.out_dim()]
                )));
            }
            for (dst, &src) in layer.w.iter_mut().zip(w.data.iter()) {
                *dst = T::from_f64(src as f64);
            }
            let b = checkpoint::require(ck, &format!("{prefix}/{name}/b"))?;
            if b.shape != [layer.out_dim()] {
                return Err(Error::checkpoint(format!(
                    "tensor {prefix}/{name}/b has shape {:?}, expected {:?}",
                    b.shape,
                    [layer.out_dim()]
                )));
            }
            for (dst, &src) in layer.b.iter_mut().zip(b.data.iter()) {
                *dst = T::from_f64(src as f64);
            }
        }
        Ok(())
    }

    fn read_moments(ck: &Checkpoint, prefix: &str, opt: &mut Adam<T>) -> Result<()> {
        // Moment slots appear lazily with the first optimizer step, so a
        // fresh learner's checkpoint holds none; read as many as exist.
        let mut m = Vec::new();
        let mut v = Vec::new();
        for slot in 0.. {
            let Some(rm) = ck.get(&format!("opt/{prefix}/{slot}/m")) else { break };
            let rv = checkpoint::require(ck, &format!("opt/{prefix}/{slot}/v"))?;
            m.push(rm.data.iter().map(|&x| T::from_f64(x as f64)).collect());
            v.push(rv.data.iter().map(|&x| T::from_f64(x as f64)).collect());
        }
        let t = checkpoint::require_scalar(ck, &format!("opt/{prefix}/t"))? as u64;
        opt.restore_moments(m, v, t);
        Ok(())
    }

    /// Rebuild a learner from a checkpoint. Network dimensions come from the
    /// file; hyperparameters come from `cfg` (widths in `cfg` are overridden
    /// to match the file). The replay buffer starts empty.
    pub fn load(path: &Path, mut cfg: LearnerConfig) -> Result<Self> {
        let ck = checkpoint::load(path)?;
        let version = checkpoint::require_scalar(&ck, "meta/version")?;
        if version != 1.0 {
            return Err(Error::checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let kind = Self::kind_from_code(checkpoint::require_scalar(&ck, "meta/kind")?)?;
        let dims = checkpoint::require(&ck, "meta/dims")?;
        if dims.data.len() != 7 {
            return Err(Error::checkpoint("meta/dims must hold 7 entries"));
        }
        let at_dim = dims.data[0] as usize;
        let team_dim = dims.data[1] as usize;
        let boids_dim = dims.data[2] as usize;
        cfg.embed = dims.data[3] as usize;
        cfg.hidden = dims.data[4] as usize;
        cfg.adapter_hidden = dims.data[5] as usize;
        cfg.adapter_tap_last = dims.data[6] != 0.0;
        let expect_boids = if kind.uses_boids_obs() { S_BOIDS_DIM } else { 0 };
        if boids_dim != expect_boids {
            return Err(Error::checkpoint("boids width inconsistent with policy kind"));
        }

        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut learner = Self::new(kind, at_dim, team_dim, cfg, &mut rng)?;
        Self::read_net(&ck, "actor", learner.actor.layers_mut())?;
        Self::read_net(&ck, "q1", learner.q1.layers_mut())?;
        Self::read_net(&ck, "q2", learner.q2.layers_mut())?;
        Self::read_net(&ck, "q1t", learner.q1_target.layers_mut())?;
        Self::read_net(&ck, "q2t", learner.q2_target.layers_mut())?;
        Self::read_moments(&ck, "actor", &mut learner.opt_actor)?;
        Self::read_moments(&ck, "q1", &mut learner.opt_q1)?;
        Self::read_moments(&ck, "q2", &mut learner.opt_q2)?;
        learner.log_alpha = checkpoint::require_scalar(&ck, "train/log_alpha")? as f64;
        let aopt = checkpoint::require(&ck, "train/alpha_opt")?;
        if aopt.data.len() != 3 {
            return Err(Error::checkpoint("train/alpha_opt must hold 3 entries"));
        }
        learner.alpha_m = aopt.data[0] as f64;
        learner.alpha_v = aopt.data[1] as f64;
        learner.alpha_t = aopt.data[2] as u64;
        Ok(learner)
    }
}
