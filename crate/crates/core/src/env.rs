//! Target-defense episode machine: spawn geometry, decision-cadence stepping
//! with substep termination checks, outcome classification, observations, and
//! rewards.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::boids::{self, BoidsConfig, BoidsForces, NormalizedAction};
use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::vessel::{
    denormalize, scale_bounds, step_dynamics, ThrustBounds, ThrustCommand, VesselParams,
    VesselState,
};

/// Geometry, timing, and noise parameters of one engagement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    pub n_defenders: usize,
    /// Capture radius: attacker is intercepted when a defender gets closer.
    pub r_cap: f64,
    /// Radius of the protected target region centered at the origin.
    pub r0: f64,
    /// Target sensing range; the attacker spawns on this circle.
    pub rho_t: f64,
    /// Attacker sensing range (repulsion cutoff for the scripted attacker).
    pub rho_a: f64,
    /// Defender-defender collision threshold, center to center.
    pub r_collision: f64,
    /// Episode duration limit, seconds.
    pub t_total: f64,
    /// Decision interval, seconds.
    pub t_action: f64,
    /// Physics integration step, seconds; must divide `t_action`.
    pub physics_dt: f64,
    /// Attacker spawn bearing is uniform in this closed interval, radians.
    pub spawn_sector: [f64; 2],
    pub noise_sigma_bearing: f64,
    pub noise_sigma_distance: f64,
    /// Attacker thrust bounds = defender bounds scaled by this factor.
    pub agility: f64,
    /// When false the dense formation term is dropped from defender rewards
    /// (ablation switch); terminal and collision terms are unaffected.
    pub formation_term: bool,
    pub vessel: VesselParams,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        Self {
            n_defenders: 3,
            r_cap: 5.0,
            r0: 15.0,
            rho_t: 60.0,
            rho_a: 15.0,
            r_collision: 3.0,
            t_total: 60.0,
            t_action: 0.2,
            physics_dt: 0.02,
            spawn_sector: [-PI, PI],
            noise_sigma_bearing: 0.02,
            noise_sigma_distance: 0.5,
            agility: 1.5,
            formation_term: true,
            vessel: VesselParams::default(),
        }
    }
}

impl EngagementConfig {
    pub fn validate(&self) -> Result<()> {
        self.vessel.validate()?;
        let positive = [
            ("r_cap", self.r_cap),
            ("r0", self.r0),
            ("rho_t", self.rho_t),
            ("rho_a", self.rho_a),
            ("r_collision", self.r_collision),
            ("t_total", self.t_total),
            ("t_action", self.t_action),
            ("physics_dt", self.physics_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.r_cap < self.r0 && self.r0 < self.rho_t) {
            return Err(Error::config(format!(
                "need r_cap < r0 < rho_t, got {} / {} / {}",
                self.r_cap, self.r0, self.rho_t
            )));
        }
        if self.n_defenders == 0 {
            return Err(Error::config("n_defenders must be at least 1"));
        }
        let steps = self.t_total / self.t_action;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "t_action {} must divide t_total {}",
                self.t_action, self.t_total
            )));
        }
        let subs = self.t_action / self.physics_dt;
        if (subs - subs.round()).abs() > 1e-9 || subs.round() < 1.0 {
            return Err(Error::config(format!(
                "physics_dt {} must divide t_action {}",
                self.physics_dt, self.t_action
            )));
        }
        let [lo, hi] = self.spawn_sector;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && hi - lo <= 2.0 * PI + 1e-9) {
            return Err(Error::config(format!(
                "spawn_sector must be an interval of width <= 2*pi, got [{lo}, {hi}]"
            )));
        }
        for (name, v) in [
            ("noise_sigma_bearing", self.noise_sigma_bearing),
            ("noise_sigma_distance", self.noise_sigma_distance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        scale_bounds(self.vessel.thrust_bounds, self.agility)?;
        // The spawn ring itself must not put defenders inside the collision
        // threshold.
        if self.n_defenders >= 2 {
            let chord = self.r0 * (PI / self.n_defenders as f64).sin();
            if chord <= self.r_collision {
                return Err(Error::config(format!(
                    "spawn ring chord {chord:.3} m <= r_collision {} m for {} defenders",
                    self.r_collision, self.n_defenders
                )));
            }
        }
        Ok(())
    }

    /// RK4 substeps per decision step.
    pub fn substeps_per_action(&self) -> u32 {
        (self.t_action / self.physics_dt).round() as u32
    }

    /// Decision steps in a full-length episode.
    pub fn max_decision_steps(&self) -> u32 {
        (self.t_total / self.t_action).round() as u32
    }

    pub fn attacker_bounds(&self) -> ThrustBounds {
        scale_bounds(self.vessel.thrust_bounds, self.agility).expect("validated agility")
    }

    /// Vessel parameters for the attacker: identical hull, scaled thrusters.
    pub fn attacker_vessel(&self) -> VesselParams {
        let mut p = self.vessel;
        p.thrust_bounds = self.attacker_bounds();
        p
    }
}

/// How an episode ended. Capture and timeout count as defender success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeOutcome {
    CaptureSuccess { defender: usize },
    TimeoutSuccess,
    BreachFailure,
    CollisionFailure { first: usize, second: usize },
}

impl EpisodeOutcome {
    pub fn is_defender_success(&self) -> bool {
        matches!(self, Self::CaptureSuccess { .. } | Self::TimeoutSuccess)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::CaptureSuccess { .. } => "capture",
            Self::TimeoutSuccess => "timeout",
            Self::BreachFailure => "breach",
            Self::CollisionFailure { .. } => "collision",
        }
    }
}

/// Full simulation state of one engagement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementState {
    pub defenders: Vec<VesselState>,
    pub attacker: VesselState,
    /// Elapsed time, seconds; always `substep_count * physics_dt`.
    pub t: f64,
    /// Physics substeps taken since reset.
    pub substep_count: u64,
    pub terminal: Option<EpisodeOutcome>,
}

impl EngagementState {
    pub fn defender_positions(&self) -> Vec<Vec2> {
        self.defenders.iter().map(|d| d.position()).collect()
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }
}

/// Spawn a fresh engagement.
///
/// Defenders sit evenly spaced on the circle of radius `r0 / 2`, rotated by a
/// common uniform offset, heading radially outward and at rest. The attacker
/// spawns on the `rho_t` circle at a bearing uniform in `spawn_sector`,
/// heading at the target, at rest. Two RNG draws are consumed: the defender
/// ring offset first, then the attacker bearing.
pub fn reset<R: Rng + ?Sized>(config: &EngagementConfig, rng: &mut R) -> Result<EngagementState> {
    config.validate()?;
    let ring_offset = rng.random_range(-PI..PI);
    let attacker_bearing = if config.spawn_sector[0] == config.spawn_sector[1] {
        config.spawn_sector[0]
    } else {
        rng.random_range(config.spawn_sector[0]..config.spawn_sector[1])
    };

    let n = config.n_defenders;
    let ring_radius = config.r0 / 2.0;
    let defenders = (0..n)
        .map(|k| {
            let angle = wrap_angle(ring_offset + 2.0 * PI * k as f64 / n as f64);
            VesselState::at_rest(
                ring_radius * angle.cos(),
                ring_radius * angle.sin(),
                angle,
            )
        })
        .collect();

    let ab = wrap_angle(attacker_bearing);
    let attacker = VesselState::at_rest(
        config.rho_t * ab.cos(),
        config.rho_t * ab.sin(),
        wrap_angle(ab + PI),
    );

    Ok(EngagementState { defenders, attacker, t: 0.0, substep_count: 0, terminal: None })
}

/// [`reset`] with a dedicated deterministic stream.
pub fn reset_seeded(config: &EngagementConfig, seed: u64) -> Result<EngagementState> {
    reset(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Classify the current geometry. Precedence: capture, then collision, then
/// breach, then timeout; `None` while the episode is live.
pub fn check_termination(
    defender_positions: &[Vec2],
    attacker_position: Vec2,
    t: f64,
    config: &EngagementConfig,
) -> Option<EpisodeOutcome> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in defender_positions.iter().enumerate() {
        let d = (p - attacker_position).norm();
        if d < config.r_cap && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    if let Some((i, _)) = best {
        return Some(EpisodeOutcome::CaptureSuccess { defender: i });
    }

    let mut pair: Option<(usize, usize, f64)> = None;
    for i in 0..defender_positions.len() {
        for j in (i + 1)..defender_positions.len() {
            let d = (defender_positions[i] - defender_positions[j]).norm();
            if d <= config.r_collision && pair.map_or(true, |(_, _, bd)| d < bd) {
                pair = Some((i, j, d));
            }
        }
    }
    if let Some((i, j, _)) = pair {
        return Some(EpisodeOutcome::CollisionFailure { first: i, second: j });
    }

    if attacker_position.norm() <= config.r0 {
        return Some(EpisodeOutcome::BreachFailure);
    }
    if t >= config.t_total - 1e-9 {
        return Some(EpisodeOutcome::TimeoutSuccess);
    }
    None
}

/// Advance one decision step: denormalize actions to thrusts, integrate all
/// vessels substep by substep, and stop at the first substep whose geometry
/// terminates the episode.
///
/// Returns the new state, one reward per defender, and the outcome if the
/// episode just ended.
pub fn step(
    state: &EngagementState,
    defender_actions: &[NormalizedAction],
    attacker_action: NormalizedAction,
    config: &EngagementConfig,
) -> Result<(EngagementState, Vec<f64>, Option<EpisodeOutcome>)> {
    if state.is_terminal() {
        return Err(Error::runtime("step called on a terminal state"));
    }
    if defender_actions.len() != state.defenders.len() {
        return Err(Error::runtime(format!(
            "expected {} defender actions, got {}",
            state.defenders.len(),
            defender_actions.len()
        )));
    }

    let d_bounds = config.vessel.thrust_bounds;
    let a_bounds = config.attacker_bounds();
    let attacker_params = config.attacker_vessel();
    let defender_thrusts: Vec<ThrustCommand> = defender_actions
        .iter()
        .map(|a| ThrustCommand::new(denormalize(a.a_left, d_bounds), denormalize(a.a_right, d_bounds)))
        .collect();
    let attacker_thrust = ThrustCommand::new(
        denormalize(attacker_action.a_left, a_bounds),
        denormalize(attacker_action.a_right, a_bounds),
    );

    let mut new = state.clone();
    let mut outcome = None;
    for _ in 0..config.substeps_per_action() {
        for (d, &cmd) in new.defenders.iter_mut().zip(&defender_thrusts) {
            *d = step_dynamics(d, cmd, &config.vessel, config.physics_dt)?;
        }
        new.attacker = step_dynamics(
            &new.attacker,
            attacker_thrust,
            &attacker_params,
            config.physics_dt,
        )?;
        new.substep_count += 1;
        new.t = new.substep_count as f64 * config.physics_dt;

        outcome = check_termination(
            &new.defender_positions(),
            new.attacker.position(),
            new.t,
            config,
        );
        if outcome.is_some() {
            break;
        }
    }

    new.terminal = outcome;
    let rewards = (0..new.defenders.len())
        .map(|i| compute_reward(i, state, &new, outcome, config))
        .collect();
    Ok((new, rewards, outcome))
}

/// Formation shaping term: `0.5 * (unit(x_A) . unit(d_DA)) - |d_DA| / n`
/// where `d_DA = sum_i unit(x_A - x_i)`. Zero when the unit vectors cancel.
pub fn formation_reward(defender_positions: &[Vec2], attacker_position: Vec2) -> f64 {
    let n = defender_positions.len();
    if n == 0 {
        return 0.0;
    }
    let mut d_da = Vec2::ZERO;
    for &p in defender_positions {
        d_da += (attacker_position - p).unit_or_zero(1e-12);
    }
    let norm = d_da.norm();
    if norm < 1e-9 {
        return 0.0;
    }
    let d_ta = attacker_position.unit_or_zero(1e-12);
    0.5 * (d_ta.dot(d_da) / norm) - norm / n as f64
}

/// Per-defender reward for the transition that produced `new`.
///
/// `r_main` is -100 on breach, +100 for the capturing defender, +50 for a
/// teammate within `3 * r_cap` of the attacker at the capture instant, else
/// 0. `r_form` is the dense formation term. A collision adds -50 to both
/// involved defenders.
pub fn compute_reward(
    i: usize,
    _prev: &EngagementState,
    new: &EngagementState,
    outcome: Option<EpisodeOutcome>,
    config: &EngagementConfig,
) -> f64 {
    let r_main = match outcome {
        Some(EpisodeOutcome::BreachFailure) => -100.0,
        Some(EpisodeOutcome::CaptureSuccess { defender }) => {
            if defender == i {
                100.0
            } else {
                let d = (new.defenders[i].position() - new.attacker.position()).norm();
                if d <= 3.0 * config.r_cap {
                    50.0
                } else {
                    0.0
                }
            }
        }
        _ => 0.0,
    };
    let r_collision = match outcome {
        Some(EpisodeOutcome::CollisionFailure { first, second }) if i == first || i == second => {
            -50.0
        }
        _ => 0.0,
    };
    let r_form = if config.formation_term {
        formation_reward(&new.defender_positions(), new.attacker.position())
    } else {
        0.0
    };
    r_main + r_form + r_collision
}

/// One defender's observation: teammate polar coordinates, attacker/target
/// polar coordinates, and the Boids evaluation it may blend with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// (bearing, distance) per teammate, body frame, self excluded, in index
    /// order.
    pub teammates: Vec<(f64, f64)>,
    /// (phi_A, d_A, phi_T, d_T): attacker and target in the body frame.
    pub at: [f64; 4],
    /// (f_sep, f_ali, f_coh, a_boids) flattened, world-frame forces.
    pub boids: [f64; 8],
}

/// Bearing and distance of `point` as seen from a vessel at `pos` with
/// heading `psi`. Bearing is measured from the bow, positive to port.
pub fn relative_polar(pos: Vec2, psi: f64, point: Vec2) -> (f64, f64) {
    let delta = point - pos;
    let body = crate::vessel::world_to_body(delta, psi);
    (wrap_angle(body.y.atan2(body.x)), delta.norm())
}

/// Build defender `i`'s observation. Gaussian noise is applied to the
/// attacker/target block only, and only when `noise_on`.
pub fn compute_observation<R: Rng + ?Sized>(
    i: usize,
    state: &EngagementState,
    boids_out: &(BoidsForces, NormalizedAction),
    config: &EngagementConfig,
    noise_on: bool,
    rng: &mut R,
) -> Observation {
    let me = &state.defenders[i];
    let pos = me.position();

    let teammates = state
        .defenders
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, other)| relative_polar(pos, me.psi, other.position()))
        .collect();

    let (mut phi_a, mut d_a) = relative_polar(pos, me.psi, state.attacker.position());
    let (mut phi_t, mut d_t) = relative_polar(pos, me.psi, Vec2::ZERO);
    if noise_on {
        let bearing_noise = Normal::new(0.0, config.noise_sigma_bearing).expect("validated sigma");
        let distance_noise =
            Normal::new(0.0, config.noise_sigma_distance).expect("validated sigma");
        phi_a = wrap_angle(phi_a + bearing_noise.sample(rng));
        d_a = (d_a + distance_noise.sample(rng)).max(0.0);
        phi_t = wrap_angle(phi_t + bearing_noise.sample(rng));
        d_t = (d_t + distance_noise.sample(rng)).max(0.0);
    }

    let (f, a) = boids_out;
    Observation {
        teammates,
        at: [phi_a, d_a, phi_t, d_t],
        boids: [
            f.f_sep.x, f.f_sep.y, f.f_ali.x, f.f_ali.y, f.f_coh.x, f.f_coh.y, a.a_left, a.a_right,
        ],
    }
}

/// Run the Boids rules for defender `i` against the current state. All
/// teammates count as neighbors; velocities are world-frame.
pub fn defender_boids(
    state: &EngagementState,
    i: usize,
    cfg: &BoidsConfig,
) -> (BoidsForces, NormalizedAction) {
    let me = &state.defenders[i];
    let mut neighbor_positions = Vec::with_capacity(state.defenders.len() - 1);
    let mut neighbor_velocities = Vec::with_capacity(state.defenders.len() - 1);
    for (j, other) in state.defenders.iter().enumerate() {
        if j != i {
            neighbor_positions.push(other.position());
            neighbor_velocities.push(other.world_velocity());
        }
    }
    boids::evaluate(
        &boids::BoidsInputs {
            self_pos: me.position(),
            self_vel_world: me.world_velocity(),
            self_psi: me.psi,
            neighbor_positions: &neighbor_positions,
            neighbor_velocities_world: &neighbor_velocities,
            attacker_pos: state.attacker.position(),
        },
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> EngagementConfig {
        EngagementConfig::default()
    }

    fn state_from_positions(defenders: &[(f64, f64, f64)], attacker: (f64, f64, f64)) -> EngagementState {
        EngagementState {
            defenders: defenders
                .iter()
                .map(|&(x, y, psi)| VesselState::at_rest(x, y, psi))
                .collect(),
            attacker: VesselState::at_rest(attacker.0, attacker.1, attacker.2),
            t: 0.0,
            substep_count: 0,
            terminal: None,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());

        let mut c = cfg();
        c.r_cap = 20.0; // violates r_cap < r0
        assert!(c.validate().is_err());

        let mut c = cfg();
        c.t_action = 0.3; // does not divide 60 evenly? 60/0.3=200 ok; break dt instead
        c.physics_dt = 0.07;
        assert!(c.validate().is_err());

        let mut c = cfg();
        c.n_defenders = 0;
        assert!(c.validate().is_err());

        let mut c = cfg();
        c.t_total = 60.1;
        assert!(c.validate().is_err());

        let mut c = cfg();
        c.agility = 0.0;
        assert!(c.validate().is_err());

        // Ring too tight for the collision threshold.
        let mut c = cfg();
        c.r_collision = 13.5; // n=3 chord is ~12.99
        assert!(c.validate().is_err());
    }

    #[test]
    fn reset_is_deterministic() {
        let c = cfg();
        let a = reset_seeded(&c, 42).unwrap();
        let b = reset_seeded(&c, 42).unwrap();
        assert_eq!(a, b);
        let c2 = reset_seeded(&c, 43).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn reset_geometry() {
        let c = cfg();
        for seed in 0..50 {
            let s = reset_seeded(&c, seed).unwrap();
            assert_eq!(s.defenders.len(), 3);
            assert_eq!(s.t, 0.0);
            assert!(s.terminal.is_none());

            // Attacker exactly on the sensing circle, heading at the target.
            let ap = s.attacker.position();
            assert!((ap.norm() - 60.0).abs() < 1e-9);
            let toward = (-ap).unit_or_zero(1e-12);
            assert!((s.attacker.psi.cos() - toward.x).abs() < 1e-9);
            assert!((s.attacker.psi.sin() - toward.y).abs() < 1e-9);

            // Defenders on the half-radius ring, evenly spaced, outward.
            for d in &s.defenders {
                assert!((d.position().norm() - 7.5).abs() < 1e-9);
                let radial = d.position().unit_or_zero(1e-12);
                assert!((d.psi.cos() - radial.x).abs() < 1e-9);
                assert!((d.psi.sin() - radial.y).abs() < 1e-9);
                assert_eq!((d.u, d.v, d.r), (0.0, 0.0, 0.0));
            }
            let chord = (s.defenders[0].position() - s.defenders[1].position()).norm();
            assert!((chord - 2.0 * 7.5 * (PI / 3.0).sin()).abs() < 1e-9);
            assert!(chord > c.r_collision);
        }
    }

    #[test]
    fn reset_respects_spawn_sector() {
        let mut c = cfg();
        c.spawn_sector = [0.0, PI / 2.0];
        for seed in 0..50 {
            let s = reset_seeded(&c, seed).unwrap();
            let bearing = s.attacker.position().y.atan2(s.attacker.position().x);
            assert!((0.0..=PI / 2.0).contains(&bearing));
        }
        // Degenerate zero-width sector pins the bearing.
        c.spawn_sector = [1.0, 1.0];
        let s = reset_seeded(&c, 7).unwrap();
        let bearing = s.attacker.position().y.atan2(s.attacker.position().x);
        assert!((bearing - 1.0).abs() < 1e-9);
    }

    #[test]
    fn termination_examples_and_precedence() {
        let c = cfg();
        // Capture at 4.9 m.
        let out = check_termination(
            &[Vec2::new(30.0, 0.0), Vec2::new(25.1, 0.0)],
            Vec2::new(30.0, 4.9),
            1.0,
            &c,
        );
        assert_eq!(out, Some(EpisodeOutcome::CaptureSuccess { defender: 0 }));

        // Exactly r_cap is not a capture; 14 m from origin is a breach.
        let out = check_termination(&[Vec2::new(9.0, 0.0)], Vec2::new(14.0, 0.0), 1.0, &c);
        assert_eq!(out, Some(EpisodeOutcome::BreachFailure));

        // Timeout only when nothing else fires.
        let out = check_termination(&[Vec2::new(30.0, 0.0)], Vec2::new(50.0, 0.0), 60.0, &c);
        assert_eq!(out, Some(EpisodeOutcome::TimeoutSuccess));
        let out = check_termination(&[Vec2::new(30.0, 0.0)], Vec2::new(50.0, 0.0), 59.9, &c);
        assert_eq!(out, None);

        // Capture beats collision, breach, and timeout simultaneously.
        let out = check_termination(
            &[Vec2::new(12.0, 0.0), Vec2::new(12.0, 1.0)],
            Vec2::new(13.0, 0.0),
            60.0,
            &c,
        );
        assert_eq!(out, Some(EpisodeOutcome::CaptureSuccess { defender: 0 }));

        // Collision beats breach.
        let out = check_termination(
            &[Vec2::new(40.0, 0.0), Vec2::new(40.0, 2.0)],
            Vec2::new(10.0, 0.0),
            1.0,
            &c,
        );
        assert_eq!(out, Some(EpisodeOutcome::CollisionFailure { first: 0, second: 1 }));

        // Closest capturing defender wins.
        let out = check_termination(
            &[Vec2::new(0.0, 4.0), Vec2::new(0.0, 2.0)],
            Vec2::ZERO,
            1.0,
            &c,
        );
        assert_eq!(out, Some(EpisodeOutcome::CaptureSuccess { defender: 1 }));
    }

    #[test]
    fn reward_hand_geometry_single_collinear_capture() {
        let c = cfg();
        let prev = state_from_positions(&[(10.0, 0.0, 0.0)], (20.0, 0.0, PI));
        let mut new = prev.clone();
        new.terminal = Some(EpisodeOutcome::CaptureSuccess { defender: 0 });
        let r = compute_reward(
            0,
            &prev,
            &new,
            Some(EpisodeOutcome::CaptureSuccess { defender: 0 }),
            &c,
        );
        assert!((r - 99.5).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn reward_helper_within_three_capture_radii() {
        let c = cfg();
        // Defender 0 captures; defender 1 sits 12 m from the attacker.
        let new = state_from_positions(
            &[(16.0, 0.0, 0.0), (20.0, 12.0, 0.0)],
            (20.0, 0.0, PI),
        );
        let out = Some(EpisodeOutcome::CaptureSuccess { defender: 0 });
        let r1 = compute_reward(1, &new, &new, out, &c);
        let form = formation_reward(&new.defender_positions(), new.attacker.position());
        assert!((r1 - (50.0 + form)).abs() < 1e-12);

        // Too far: no helper bonus.
        let far = state_from_positions(
            &[(16.0, 0.0, 0.0), (20.0, 15.1, 0.0)],
            (20.0, 0.0, PI),
        );
        let r1 = compute_reward(1, &far, &far, out, &c);
        let form = formation_reward(&far.defender_positions(), far.attacker.position());
        assert!((r1 - form).abs() < 1e-12);
    }

    #[test]
    fn reward_formation_two_defenders_at_45_degrees() {
        // Attacker on the x axis; defenders at +-45 degrees around it as seen
        // from the attacker, so the unit vectors sum to (sqrt(2), 0).
        let attacker = Vec2::new(20.0, 0.0);
        let d0 = attacker - Vec2::new(1.0, 1.0) * (10.0 / 2f64.sqrt());
        let d1 = attacker - Vec2::new(1.0, -1.0) * (10.0 / 2f64.sqrt());
        let r = formation_reward(&[d0, d1], attacker);
        let expected = 0.5 - 2f64.sqrt() / 2.0;
        assert!((r - expected).abs() < 1e-12, "got {r}, want {expected}");
    }

    #[test]
    fn reward_formation_degenerate_cancellation() {
        // Opposite unit vectors cancel exactly.
        let r = formation_reward(
            &[Vec2::new(10.0, 0.0), Vec2::new(30.0, 0.0)],
            Vec2::new(20.0, 0.0),
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reward_formation_range_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let n = rng.random_range(1..=6);
            let defenders: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)))
                .collect();
            let attacker =
                Vec2::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
            let r = formation_reward(&defenders, attacker);
            assert!((-1.5..=0.5 + 1e-12).contains(&r), "r_form {r} out of range");
        }
    }

    #[test]
    fn reward_breach_and_collision() {
        let c = cfg();
        let s = state_from_positions(
            &[(10.0, 0.0, 0.0), (0.0, 10.0, 0.0), (-10.0, 0.0, 0.0)],
            (14.0, 0.0, PI),
        );
        let form = |i: usize| {
            let _ = i;
            formation_reward(&s.defender_positions(), s.attacker.position())
        };
        // Breach penalizes everyone.
        for i in 0..3 {
            let r = compute_reward(i, &s, &s, Some(EpisodeOutcome::BreachFailure), &c);
            assert!((r - (-100.0 + form(i))).abs() < 1e-12);
        }
        // Collision penalizes exactly the pair.
        let out = Some(EpisodeOutcome::CollisionFailure { first: 0, second: 2 });
        for i in 0..3 {
            let r = compute_reward(i, &s, &s, out, &c);
            let want = if i == 1 { form(i) } else { -50.0 + form(i) };
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_rotation_symmetry() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let defenders: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| {
                    (
                        rng.random_range(-40.0..40.0),
                        rng.random_range(-40.0..40.0),
                        rng.random_range(-PI..PI),
                    )
                })
                .collect();
            let attacker = (
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-PI..PI),
            );
            let s = state_from_positions(&defenders, attacker);
            let theta = rng.random_range(-PI..PI);
            let rot = |(x, y, psi): (f64, f64, f64)| {
                let p = Vec2::new(x, y).rotated(theta);
                (p.x, p.y, wrap_angle(psi + theta))
            };
            let s_rot = state_from_positions(
                &defenders.iter().map(|&d| rot(d)).collect::<Vec<_>>(),
                rot(attacker),
            );

            let out = check_termination(&s.defender_positions(), s.attacker.position(), 1.0, &c);
            let out_rot =
                check_termination(&s_rot.defender_positions(), s_rot.attacker.position(), 1.0, &c);
            assert_eq!(out, out_rot);

            for i in 0..n {
                let r = compute_reward(i, &s, &s, out, &c);
                let r_rot = compute_reward(i, &s_rot, &s_rot, out_rot, &c);
                assert!((r - r_rot).abs() < 1e-9, "{r} vs {r_rot}");
            }
        }
    }

    #[test]
    fn step_thrust_endpoints_move_vessel() {
        // Full forward on both thrusters accelerates the defender along +x.
        let c = cfg();
        let mut s = reset_seeded(&c, 1).unwrap();
        // Place defender 0 at origin-adjacent pose pointing +x, far from all.
        s.defenders[0] = VesselState::at_rest(30.0, 30.0, 0.0);
        let actions = vec![NormalizedAction::new(1.0, 1.0); 3];
        let (new, _, _) = step(&s, &actions, NormalizedAction::ZERO, &c).unwrap();
        assert!(new.defenders[0].u > 0.0);
        assert!(new.defenders[0].x > 30.0);
        assert!((new.t - 0.2).abs() < 1e-12);
        assert_eq!(new.substep_count, 10);
    }

    #[test]
    fn step_rejects_terminal_and_bad_lengths() {
        let c = cfg();
        let s = reset_seeded(&c, 2).unwrap();
        let wrong = vec![NormalizedAction::ZERO; 2];
        assert!(step(&s, &wrong, NormalizedAction::ZERO, &c).is_err());

        let mut done = s.clone();
        done.terminal = Some(EpisodeOutcome::TimeoutSuccess);
        let ok_len = vec![NormalizedAction::ZERO; 3];
        assert!(step(&done, &ok_len, NormalizedAction::ZERO, &c).is_err());
    }

    #[test]
    fn step_substep_capture_ends_mid_decision() {
        let mut c = cfg();
        c.n_defenders = 1;
        // Head-on closing at ~4 m/s with a 0.3 m gap to the capture radius:
        // capture lands a few substeps in, well before the 0.2 s boundary.
        let mut s = state_from_positions(&[(10.0, 0.0, 0.0)], (15.3, 0.0, PI));
        s.defenders[0].u = 2.0;
        s.attacker.u = 2.0;
        let (new, rewards, outcome) =
            step(&s, &[NormalizedAction::ZERO], NormalizedAction::ZERO, &c).unwrap();
        assert_eq!(outcome, Some(EpisodeOutcome::CaptureSuccess { defender: 0 }));
        assert!(new.is_terminal());
        assert!(new.t > 0.0 && new.t < 0.2 - 1e-12, "t = {}", new.t);
        assert!(new.substep_count < 10);
        assert!(rewards[0] > 99.0, "capture reward expected, got {}", rewards[0]);
        let d = (new.defenders[0].position() - new.attacker.position()).norm();
        assert!(d < c.r_cap);
    }

    #[test]
    fn episode_partition_random_rollouts() {
        // Every random episode terminates with exactly one outcome, time
        // never exceeds the limit, and stepping past terminal is rejected.
        let mut c = cfg();
        c.t_total = 12.0; // keep runtime modest
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut seen = [0usize; 4];
        for seed in 0..20 {
            let mut s = reset_seeded(&c, seed).unwrap();
            let mut outcome = None;
            while outcome.is_none() {
                let actions: Vec<NormalizedAction> = (0..c.n_defenders)
                    .map(|_| {
                        NormalizedAction::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                let attack = NormalizedAction::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let (new, rewards, out) = step(&s, &actions, attack, &c).unwrap();
                assert_eq!(rewards.len(), c.n_defenders);
                assert!(new.t <= c.t_total + 1e-9);
                s = new;
                outcome = out;
            }
            assert_eq!(s.terminal, outcome);
            assert!(step(&s, &[], NormalizedAction::ZERO, &c).is_err());
            let idx = match outcome.unwrap() {
                EpisodeOutcome::CaptureSuccess { .. } => 0,
                EpisodeOutcome::TimeoutSuccess => 1,
                EpisodeOutcome::BreachFailure => 2,
                EpisodeOutcome::CollisionFailure { .. } => 3,
            };
            seen[idx] += 1;
        }
        assert_eq!(seen.iter().sum::<usize>(), 20);
    }

    #[test]
    fn observation_examples() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Defender at origin-ish pointing +x; attacker 10 m dead ahead,
        // teammate directly to port.
        let s = state_from_positions(
            &[(20.0, 0.0, 0.0), (20.0, 6.0, 1.0)],
            (30.0, 0.0, PI),
        );
        let boids_out = defender_boids(&s, 0, &BoidsConfig::default());
        let obs = compute_observation(0, &s, &boids_out, &c, false, &mut rng);
        assert!((obs.at[0] - 0.0).abs() < 1e-12); // phi_A
        assert!((obs.at[1] - 10.0).abs() < 1e-12); // d_A
        assert_eq!(obs.teammates.len(), 1);
        assert!((obs.teammates[0].0 - PI / 2.0).abs() < 1e-12); // port
        assert!((obs.teammates[0].1 - 6.0).abs() < 1e-12);
        // Target is dead astern at 20 m.
        assert!((obs.at[2].abs() - PI) < 1e-12);
        assert!((obs.at[3] - 20.0).abs() < 1e-12);
        // Boids copy-through.
        assert_eq!(obs.boids[6], boids_out.1.a_left);
        assert_eq!(obs.boids[7], boids_out.1.a_right);

        // Noise off: repeated calls identical.
        let again = compute_observation(0, &s, &boids_out, &c, false, &mut rng);
        assert_eq!(obs, again);

        // Noise on: s_AT perturbed, teammates untouched.
        let noisy = compute_observation(0, &s, &boids_out, &c, true, &mut rng);
        assert_eq!(noisy.teammates, obs.teammates);
        assert_ne!(noisy.at, obs.at);
        assert!(noisy.at[1] >= 0.0 && noisy.at[3] >= 0.0);
    }

    #[test]
    fn observation_teammate_permutation() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = state_from_positions(
            &[(10.0, 0.0, 0.3), (0.0, 10.0, 1.0), (-10.0, 5.0, -2.0)],
            (40.0, 0.0, PI),
        );
        let mut swapped = s.clone();
        swapped.defenders.swap(1, 2);

        let b = defender_boids(&s, 0, &BoidsConfig::default());
        let b_swapped = defender_boids(&swapped, 0, &BoidsConfig::default());
        let obs = compute_observation(0, &s, &b, &c, false, &mut rng);
        let obs_swapped = compute_observation(0, &swapped, &b_swapped, &c, false, &mut rng);

        // s_D is permuted identically, everything else unchanged.
        assert_eq!(obs.teammates[0], obs_swapped.teammates[1]);
        assert_eq!(obs.teammates[1], obs_swapped.teammates[0]);
        assert_eq!(obs.at, obs_swapped.at);
        for k in 0..8 {
            assert!((obs.boids[k] - obs_swapped.boids[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn state_frozen_after_terminal_in_step_loop() {
        // A breach inside a decision step halts integration at that substep.
        let mut c = cfg();
        c.n_defenders = 1;
        let mut s = state_from_positions(&[(-30.0, 0.0, 0.0)], (15.4, 0.0, PI));
        s.attacker.u = 3.0;
        let (new, _, outcome) =
            step(&s, &[NormalizedAction::ZERO], NormalizedAction::ZERO, &c).unwrap();
        assert_eq!(outcome, Some(EpisodeOutcome::BreachFailure));
        // Attacker stopped just inside the boundary rather than integrating
        // the full 0.2 s.
        assert!(new.attacker.position().norm() > 14.9);
        assert!(new.substep_count < 10);
    }
}
