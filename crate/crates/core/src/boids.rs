//! Extended Boids baseline: separation, alignment, cohesion, and attraction
//! forces plus the linear mapping from total virtual force to a normalized
//! twin-thruster action.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::vessel::world_to_body;

/// Minimum neighbor distance before the separation denominator is clamped.
pub const SEPARATION_EPS: f64 = 1e-6;

/// Dimensionless gains for the four Boids rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoidsWeights {
    pub k_sep: f64,
    pub k_ali: f64,
    pub k_coh: f64,
    pub k_att: f64,
}

impl Default for BoidsWeights {
    fn default() -> Self {
        Self { k_sep: 10.0, k_ali: 0.1, k_coh: 0.1, k_att: 0.5 }
    }
}

/// Gains of the linear force-to-thrust mapping, 1/N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingGains {
    /// Surge gain applied to the body-frame x force component.
    pub k_sur: f64,
    /// Yaw gain applied to the body-frame y force component.
    pub k_yaw: f64,
}

impl Default for MappingGains {
    fn default() -> Self {
        Self { k_sur: 0.001, k_yaw: 0.002 }
    }
}

/// The four virtual force vectors and their sum, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoidsForces {
    pub f_sep: Vec2,
    pub f_ali: Vec2,
    pub f_coh: Vec2,
    pub f_att: Vec2,
    pub f_total: Vec2,
}

impl BoidsForces {
    /// Build from components; `f_total` is always the exact component sum.
    pub fn new(f_sep: Vec2, f_ali: Vec2, f_coh: Vec2, f_att: Vec2) -> Self {
        Self { f_sep, f_ali, f_coh, f_att, f_total: f_sep + f_ali + f_coh + f_att }
    }

    pub fn zero() -> Self {
        Self::new(Vec2::ZERO, Vec2::ZERO, Vec2::ZERO, Vec2::ZERO)
    }
}

/// Normalized twin-thruster action, both components in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAction {
    pub a_left: f64,
    pub a_right: f64,
}

impl NormalizedAction {
    pub const ZERO: NormalizedAction = NormalizedAction { a_left: 0.0, a_right: 0.0 };

    pub fn new(a_left: f64, a_right: f64) -> Self {
        Self { a_left: a_left.clamp(-1.0, 1.0), a_right: a_right.clamp(-1.0, 1.0) }
    }
}

/// Repulsion away from each neighbor: `-k_sep * sum_j unit(x_j - x_i)`.
///
/// A neighbor closer than [`SEPARATION_EPS`] has its distance clamped so the
/// force stays finite; the degenerate geometry is logged.
pub fn separation_force(self_pos: Vec2, neighbor_positions: &[Vec2], k_sep: f64) -> Vec2 {
    let mut sum = Vec2::ZERO;
    for &pos in neighbor_positions {
        let delta = pos - self_pos;
        if delta.norm() <= SEPARATION_EPS {
            log::warn!(
                "separation: neighbor within {SEPARATION_EPS} m of ({}, {}); clamping",
                self_pos.x,
                self_pos.y
            );
        }
        sum += delta.unit_clamped(SEPARATION_EPS);
    }
    -sum * k_sep
}

/// Steering toward the neighbors' mean velocity.
///
/// `literal` selects the reading `(k/|N|) * sum(v_j) - v_i`; the default is
/// the conventional `k * (mean(v_j) - v_i)`. Empty neighbor set gives zero.
pub fn alignment_force(
    self_vel: Vec2,
    neighbor_velocities: &[Vec2],
    k_ali: f64,
    literal: bool,
) -> Vec2 {
    consensus_force(self_vel, neighbor_velocities, k_ali, literal)
}

/// Steering toward the neighbors' centroid; same structure as alignment.
pub fn cohesion_force(
    self_pos: Vec2,
    neighbor_positions: &[Vec2],
    k_coh: f64,
    literal: bool,
) -> Vec2 {
    consensus_force(self_pos, neighbor_positions, k_coh, literal)
}

fn consensus_force(own: Vec2, neighbors: &[Vec2], k: f64, literal: bool) -> Vec2 {
    if neighbors.is_empty() {
        return Vec2::ZERO;
    }
    let n = neighbors.len() as f64;
    let mut sum = Vec2::ZERO;
    for &v in neighbors {
        sum += v;
    }
    if literal {
        sum * (k / n) - own
    } else {
        (sum * (1.0 / n) - own) * k
    }
}

/// Pull toward the attacker, unnormalized: `k_att * (x_A - x_i)`.
pub fn attraction_force(self_pos: Vec2, attacker_pos: Vec2, k_att: f64) -> Vec2 {
    (attacker_pos - self_pos) * k_att
}

/// Component-wise sum of the four forces.
pub fn total_force(forces: &BoidsForces) -> Vec2 {
    forces.f_sep + forces.f_ali + forces.f_coh + forces.f_att
}

/// Map a world-frame force to a normalized action for a vessel at heading `psi`.
///
/// The body-frame x component drives both thrusters equally; the body-frame y
/// component drives them differentially so a port force turns the bow CCW.
pub fn force_to_action(f_world: Vec2, psi: f64, gains: MappingGains) -> NormalizedAction {
    let f_body = world_to_body(f_world, psi);
    let common = gains.k_sur * f_body.x;
    let diff = gains.k_yaw * f_body.y;
    NormalizedAction::new(common - diff, common + diff)
}

/// Full Boids baseline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoidsConfig {
    pub weights: BoidsWeights,
    pub gains: MappingGains,
    /// Use the literal consensus form `(k/|N|) * sum(v_j) - v_i` for
    /// alignment/cohesion instead of the mean-difference form.
    pub literal_consensus: bool,
}

impl Default for BoidsConfig {
    fn default() -> Self {
        Self {
            weights: BoidsWeights::default(),
            gains: MappingGains::default(),
            literal_consensus: false,
        }
    }
}

impl BoidsConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let fields = [
            ("boids.weights.k_sep", self.weights.k_sep),
            ("boids.weights.k_ali", self.weights.k_ali),
            ("boids.weights.k_coh", self.weights.k_coh),
            ("boids.weights.k_att", self.weights.k_att),
            ("boids.gains.k_sur", self.gains.k_sur),
            ("boids.gains.k_yaw", self.gains.k_yaw),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(crate::error::Error::config(format!(
                    "{name} must be finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One defender's view of the engagement for the Boids evaluation.
pub struct BoidsInputs<'a> {
    pub self_pos: Vec2,
    pub self_vel_world: Vec2,
    pub self_psi: f64,
    pub neighbor_positions: &'a [Vec2],
    pub neighbor_velocities_world: &'a [Vec2],
    pub attacker_pos: Vec2,
}

/// Evaluate the extended Boids rules for one defender.
pub fn evaluate(inputs: &BoidsInputs<'_>, cfg: &BoidsConfig) -> (BoidsForces, NormalizedAction) {
    let w = cfg.weights;
    let forces = BoidsForces::new(
        separation_force(inputs.self_pos, inputs.neighbor_positions, w.k_sep),
        alignment_force(
            inputs.self_vel_world,
            inputs.neighbor_velocities_world,
            w.k_ali,
            cfg.literal_consensus,
        ),
        cohesion_force(
            inputs.self_pos,
            inputs.neighbor_positions,
            w.k_coh,
            cfg.literal_consensus,
        ),
        attraction_force(inputs.self_pos, inputs.attacker_pos, w.k_att),
    );
    let action = force_to_action(forces.f_total, inputs.self_psi, cfg.gains);
    (forces, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vecs(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<Vec2> {
        (0..n)
            .map(|_| Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi)))
            .collect()
    }

    #[test]
    fn separation_single_neighbor() {
        let f = separation_force(Vec2::ZERO, &[Vec2::new(1.0, 0.0)], 10.0);
        assert!((f.x + 10.0).abs() < 1e-12 && f.y.abs() < 1e-12);
    }

    #[test]
    fn separation_symmetric_cancellation() {
        let f = separation_force(
            Vec2::ZERO,
            &[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)],
            10.0,
        );
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);
    }

    #[test]
    fn separation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let me = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let neighbors = random_vecs(&mut rng, 5, -20.0, 20.0);
            let k = rng.random_range(0.1..20.0);
            let got = separation_force(me, &neighbors, k);
            // Independent term-by-term sum.
            let mut want = Vec2::ZERO;
            for nb in &neighbors {
                let dx = nb.x - me.x;
                let dy = nb.y - me.y;
                let d = (dx * dx + dy * dy).sqrt();
                want = want + Vec2::new(-k * dx / d, -k * dy / d);
            }
            assert!((got.x - want.x).abs() < 1e-12);
            assert!((got.y - want.y).abs() < 1e-12);
        }
    }

    #[test]
    fn separation_coincident_neighbor_clamped() {
        let f = separation_force(Vec2::ZERO, &[Vec2::ZERO], 10.0);
        assert!(f.x.is_finite() && f.y.is_finite());
    }

    #[test]
    fn alignment_cases() {
        // Matches the literal equation when v_i = 0.
        let f = alignment_force(Vec2::ZERO, &[Vec2::new(1.0, 0.0)], 0.1, false);
        assert!((f.x - 0.1).abs() < 1e-12 && f.y.abs() < 1e-12);
        let f_lit = alignment_force(Vec2::ZERO, &[Vec2::new(1.0, 0.0)], 0.1, true);
        assert!((f_lit.x - 0.1).abs() < 1e-12);

        // Consensus fixed point.
        let v = Vec2::new(0.7, -0.2);
        let f = alignment_force(v, &[v], 0.1, false);
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);

        // Empty neighbor set.
        assert_eq!(alignment_force(v, &[], 0.1, false), Vec2::ZERO);
    }

    #[test]
    fn alignment_matches_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let me = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let vels = random_vecs(&mut rng, 4, -3.0, 3.0);
            let k = rng.random_range(0.01..1.0);
            let got = alignment_force(me, &vels, k, false);
            let mean = vels.iter().fold(Vec2::ZERO, |a, &b| a + b) * (1.0 / vels.len() as f64);
            let want = (mean - me) * k;
            assert!((got.x - want.x).abs() < 1e-12 && (got.y - want.y).abs() < 1e-12);

            let got_lit = alignment_force(me, &vels, k, true);
            let want_lit = mean * k - me;
            assert!((got_lit.x - want_lit.x).abs() < 1e-12);
        }
    }

    #[test]
    fn cohesion_cases() {
        let f = cohesion_force(Vec2::ZERO, &[Vec2::new(2.0, 0.0)], 0.1, false);
        assert!((f.x - 0.2).abs() < 1e-12 && f.y.abs() < 1e-12);

        // Self at centroid.
        let f = cohesion_force(
            Vec2::new(1.0, 1.0),
            &[Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0)],
            0.1,
            false,
        );
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);
    }

    #[test]
    fn attraction_cases() {
        let f = attraction_force(Vec2::ZERO, Vec2::new(10.0, 0.0), 0.5);
        assert!((f.x - 5.0).abs() < 1e-12 && f.y.abs() < 1e-12);
        assert_eq!(attraction_force(Vec2::new(3.0, 4.0), Vec2::new(3.0, 4.0), 0.5), Vec2::ZERO);

        // Linearity: doubling the offset doubles the magnitude.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let me = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let d = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let f1 = attraction_force(me, me + d, 0.5);
            let f2 = attraction_force(me, me + d * 2.0, 0.5);
            assert!((f2.norm() - 2.0 * f1.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn total_force_cases() {
        assert_eq!(total_force(&BoidsForces::zero()), Vec2::ZERO);
        let f = BoidsForces::new(Vec2::new(-10.0, 0.0), Vec2::ZERO, Vec2::ZERO, Vec2::new(5.0, 0.0));
        assert_eq!(total_force(&f), Vec2::new(-5.0, 0.0));
        assert_eq!(f.f_total, Vec2::new(-5.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let parts = random_vecs(&mut rng, 4, -10.0, 10.0);
            let f = BoidsForces::new(parts[0], parts[1], parts[2], parts[3]);
            let want = parts.iter().fold(Vec2::ZERO, |a, &b| a + b);
            assert_eq!(total_force(&f), want);
        }
    }

    #[test]
    fn force_to_action_examples() {
        let g = MappingGains::default();
        // Pure surge at psi = 0.
        let a = force_to_action(Vec2::new(500.0, 0.0), 0.0, g);
        assert!((a.a_left - 0.5).abs() < 1e-12 && (a.a_right - 0.5).abs() < 1e-12);
        // Pure port force: CCW turn, clipped.
        let a = force_to_action(Vec2::new(0.0, 500.0), 0.0, g);
        assert_eq!((a.a_left, a.a_right), (-1.0, 1.0));
        // Reverse.
        let a = force_to_action(Vec2::new(-500.0, 0.0), 0.0, g);
        assert!((a.a_left + 0.5).abs() < 1e-12 && (a.a_right + 0.5).abs() < 1e-12);
    }

    #[test]
    fn force_to_action_always_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = MappingGains::default();
        for _ in 0..1000 {
            let f = Vec2::new(
                rng.random_range(-1e6..1e6),
                rng.random_range(-1e6..1e6),
            );
            let psi = rng.random_range(-PI..PI);
            let a = force_to_action(f, psi, g);
            assert!((-1.0..=1.0).contains(&a.a_left));
            assert!((-1.0..=1.0).contains(&a.a_right));
        }
    }

    fn eval_inputs(
        positions: &[Vec2],
        velocities: &[Vec2],
        psi: f64,
        attacker: Vec2,
        cfg: &BoidsConfig,
    ) -> (BoidsForces, NormalizedAction) {
        evaluate(
            &BoidsInputs {
                self_pos: positions[0],
                self_vel_world: velocities[0],
                self_psi: psi,
                neighbor_positions: &positions[1..],
                neighbor_velocities_world: &velocities[1..],
                attacker_pos: attacker,
            },
            cfg,
        )
    }

    #[test]
    fn permutation_invariance() {
        let cfg = BoidsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let pos = random_vecs(&mut rng, 4, -20.0, 20.0);
            let vel = random_vecs(&mut rng, 4, -3.0, 3.0);
            let attacker = Vec2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            let psi = rng.random_range(-PI..PI);

            let (f1, a1) = eval_inputs(&pos, &vel, psi, attacker, &cfg);
            let mut pos2 = pos.clone();
            let mut vel2 = vel.clone();
            pos2[1..].reverse();
            vel2[1..].reverse();
            let (f2, a2) = eval_inputs(&pos2, &vel2, psi, attacker, &cfg);

            assert!((f1.f_total.x - f2.f_total.x).abs() < 1e-12);
            assert!((f1.f_total.y - f2.f_total.y).abs() < 1e-12);
            assert!((a1.a_left - a2.a_left).abs() < 1e-12);
            assert!((a1.a_right - a2.a_right).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariance() {
        let cfg = BoidsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let pos = random_vecs(&mut rng, 3, -15.0, 15.0);
            let vel = random_vecs(&mut rng, 3, -3.0, 3.0);
            let attacker = Vec2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            let shift = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));

            let (f1, _) = eval_inputs(&pos, &vel, 0.3, attacker, &cfg);
            let pos2: Vec<Vec2> = pos.iter().map(|&p| p + shift).collect();
            let (f2, _) = eval_inputs(&pos2, &vel, 0.3, attacker + shift, &cfg);

            for (a, b) in [
                (f1.f_sep, f2.f_sep),
                (f1.f_ali, f2.f_ali),
                (f1.f_coh, f2.f_coh),
                (f1.f_att, f2.f_att),
            ] {
                assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_equivariance() {
        let cfg = BoidsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let pos = random_vecs(&mut rng, 3, -15.0, 15.0);
            let vel = random_vecs(&mut rng, 3, -3.0, 3.0);
            let attacker = Vec2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            let theta = rng.random_range(-PI..PI);
            let psi = rng.random_range(-PI..PI);

            let (f1, a1) = eval_inputs(&pos, &vel, psi, attacker, &cfg);
            let pos2: Vec<Vec2> = pos.iter().map(|&p| p.rotated(theta)).collect();
            let vel2: Vec<Vec2> = vel.iter().map(|&v| v.rotated(theta)).collect();
            let (f2, a2) = eval_inputs(&pos2, &vel2, psi + theta, attacker.rotated(theta), &cfg);

            for (a, b) in [
                (f1.f_sep, f2.f_sep),
                (f1.f_ali, f2.f_ali),
                (f1.f_coh, f2.f_coh),
                (f1.f_att, f2.f_att),
                (f1.f_total, f2.f_total),
            ] {
                let rotated = a.rotated(theta);
                assert!((rotated.x - b.x).abs() < 1e-10 && (rotated.y - b.y).abs() < 1e-10);
            }
            // The action only sees the body-frame force, which is unchanged.
            assert!((a1.a_left - a2.a_left).abs() < 1e-10);
            assert!((a1.a_right - a2.a_right).abs() < 1e-10);
        }
    }
}
