//! Artificial potential field attacker: constant-magnitude attraction toward
//! the target plus short-range repulsion from each defender inside the
//! attacker's sensing radius.

use serde::{Deserialize, Serialize};

use crate::boids::{force_to_action, MappingGains, NormalizedAction};
use crate::env::{relative_polar, EngagementConfig, EngagementState, EpisodeOutcome};
use crate::geom::Vec2;

/// Distance floor below which the repulsion magnitude is frozen.
pub const APF_EPS: f64 = 1e-3;

/// Gains and ranges of the potential field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApfParams {
    pub k_attract: f64,
    pub k_repulse: f64,
    /// Repulsion cutoff; defenders farther than this exert no force.
    pub rho_a: f64,
    pub gains: MappingGains,
}

impl Default for ApfParams {
    fn default() -> Self {
        Self {
            k_attract: 800.0,
            k_repulse: 1200.0,
            rho_a: 15.0,
            gains: MappingGains::default(),
        }
    }
}

impl ApfParams {
    pub fn validate(&self) -> crate::error::Result<()> {
        for (name, v) in [
            ("apf.k_attract", self.k_attract),
            ("apf.k_repulse", self.k_repulse),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(crate::error::Error::config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.rho_a.is_finite() && self.rho_a > 0.0) {
            return Err(crate::error::Error::config(format!(
                "apf.rho_a must be positive, got {}",
                self.rho_a
            )));
        }
        Ok(())
    }
}

/// Attractive term: unit pull toward the target scaled by `k_attract`.
pub fn attract_force(self_pos: Vec2, target_pos: Vec2, k_attract: f64) -> Vec2 {
    (target_pos - self_pos).unit_or_zero(1e-12) * k_attract
}

/// Repulsive term from one defender at distance `d`:
/// `k_repulse * (1/d - 1/rho_a) / d^2` away from the defender, zero past
/// `rho_a`. Below [`APF_EPS`] the magnitude is held at its `d = eps` value so
/// the force stays finite.
pub fn repulse_force(self_pos: Vec2, obstacle_pos: Vec2, k_repulse: f64, rho_a: f64) -> Vec2 {
    let delta = self_pos - obstacle_pos;
    let d = delta.norm();
    if d >= rho_a {
        return Vec2::ZERO;
    }
    let dc = d.max(APF_EPS);
    let magnitude = k_repulse * (1.0 / dc - 1.0 / rho_a) / (dc * dc);
    if d <= APF_EPS {
        // Direction is arbitrary at exact coincidence; push along +x.
        if d == 0.0 {
            return Vec2::new(magnitude, 0.0);
        }
        return delta * (magnitude / d);
    }
    delta * (magnitude / d)
}

/// Total field force on the attacker.
pub fn total_field(
    self_pos: Vec2,
    target_pos: Vec2,
    defender_positions: &[Vec2],
    params: &ApfParams,
) -> Vec2 {
    let mut f = attract_force(self_pos, target_pos, params.k_attract);
    for &obs in defender_positions {
        f += repulse_force(self_pos, obs, params.k_repulse, params.rho_a);
    }
    f
}

/// Evaluate the APF policy: field force mapped through the same linear
/// force-to-thruster rule the defenders use.
pub fn apf_action(
    self_pos: Vec2,
    self_psi: f64,
    target_pos: Vec2,
    defender_positions: &[Vec2],
    params: &ApfParams,
) -> NormalizedAction {
    let f = total_field(self_pos, target_pos, defender_positions, params);
    force_to_action(f, self_psi, params.gains)
}

/// What the learned attacker sees: the target in its body frame, plus each
/// defender currently inside the sensing radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerObservation {
    /// (phi_T, d_T), body frame.
    pub target: [f64; 2],
    /// (bearing, distance) per defender within `rho_a`, index order.
    pub defenders: Vec<(f64, f64)>,
}

/// Build the attacker's observation from the engagement state.
pub fn attacker_observation(
    state: &EngagementState,
    config: &EngagementConfig,
) -> AttackerObservation {
    let pos = state.attacker.position();
    let psi = state.attacker.psi;
    let (phi_t, d_t) = relative_polar(pos, psi, Vec2::ZERO);
    let defenders = state
        .defenders
        .iter()
        .map(|d| relative_polar(pos, psi, d.position()))
        .filter(|&(_, d)| d <= config.rho_a)
        .collect();
    AttackerObservation { target: [phi_t, d_t], defenders }
}

/// Attacker-side reward: +-100 on a breach/capture ending, dense progress
/// shaping of `0.1` per meter gained toward the target, and -1 for each step
/// spent within `2 * r_cap` of any defender.
pub fn attacker_reward(
    prev: &EngagementState,
    new: &EngagementState,
    outcome: Option<EpisodeOutcome>,
    config: &EngagementConfig,
) -> f64 {
    let terminal = match outcome {
        Some(EpisodeOutcome::BreachFailure) => 100.0,
        Some(EpisodeOutcome::CaptureSuccess { .. }) => -100.0,
        _ => 0.0,
    };
    let progress = 0.1 * (prev.attacker.position().norm() - new.attacker.position().norm());
    let crowded = new
        .defenders
        .iter()
        .any(|d| (d.position() - new.attacker.position()).norm() <= 2.0 * config.r_cap);
    terminal + progress + if crowded { -1.0 } else { 0.0 }
}
