//! Planar 3-DoF (surge, sway, yaw) vessel dynamics with differential
//! twin-thruster input and fixed-step RK4 integration.
//!
//! Body frame: +x forward, +y to port, heading `psi` measured CCW from the
//! world +x axis. The model keeps Coriolis cross-coupling in surge/sway and
//! treats yaw as thruster-dominated:
//!
//! ```text
//! (m - Xudot) u' = tau_l + tau_r + (m - Yvdot) v r - (du1 + du2|u|) u
//! (m - Yvdot) v' = -(m - Xudot) u r - (dv1 + dv2|v|) v
//! (Iz - Nrdot) r' = b (tau_r - tau_l) - (dr1 + dr2|r|) r
//! x' = u cos(psi) - v sin(psi),  y' = u sin(psi) + v cos(psi),  psi' = r
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};

/// Pose and body-frame velocities of one USV.
///
/// `psi` is kept in `(-pi, pi]` after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselState {
    /// World-frame position, meters.
    pub x: f64,
    pub y: f64,
    /// Heading, radians, CCW from world +x.
    pub psi: f64,
    /// Surge velocity (body +x), m/s.
    pub u: f64,
    /// Sway velocity (body +y, to port), m/s.
    pub v: f64,
    /// Yaw rate, rad/s, CCW positive.
    pub r: f64,
}

impl VesselState {
    pub fn at_rest(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi, u: 0.0, v: 0.0, r: 0.0 }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// World-frame velocity vector.
    pub fn world_velocity(&self) -> Vec2 {
        body_to_world(Vec2::new(self.u, self.v), self.psi)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.u, self.v, self.r]
            .iter()
            .all(|f| f.is_finite())
    }
}

/// Inclusive thrust interval `[tau_min, tau_max]` in newtons, per thruster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustBounds {
    pub tau_min: f64,
    pub tau_max: f64,
}

impl ThrustBounds {
    pub fn new(tau_min: f64, tau_max: f64) -> Self {
        Self { tau_min, tau_max }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min < 0.0 && 0.0 < self.tau_max) {
            return Err(Error::config(format!(
                "thrust bounds must satisfy tau_min < 0 < tau_max, got [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau >= self.tau_min && tau <= self.tau_max
    }
}

/// 3-DoF model coefficients plus the actuator geometry and limits.
///
/// Defaults are WAM-V-like (top speed around 5 m/s at 2000 N total thrust)
/// and fully configurable; none of them are measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselParams {
    /// Rigid-body mass, kg.
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    pub iz: f64,
    /// Added mass in surge / sway / yaw.
    pub x_udot: f64,
    pub y_vdot: f64,
    pub n_rdot: f64,
    /// Linear damping coefficients.
    pub du1: f64,
    pub dv1: f64,
    pub dr1: f64,
    /// Quadratic damping coefficients.
    pub du2: f64,
    pub dv2: f64,
    pub dr2: f64,
    /// Half thruster spacing (yaw lever arm), meters.
    pub lever_arm: f64,
    /// Per-thruster limits.
    pub thrust_bounds: ThrustBounds,
}

impl Default for VesselParams {
    fn default() -> Self {
        Self {
            mass: 180.0,
            iz: 250.0,
            x_udot: 30.0,
            y_vdot: 90.0,
            n_rdot: 60.0,
            du1: 70.0,
            dv1: 400.0,
            dr1: 300.0,
            du2: 60.0,
            dv2: 500.0,
            dr2: 200.0,
            lever_arm: 1.2,
            thrust_bounds: ThrustBounds::new(-500.0, 1000.0),
        }
    }
}

impl VesselParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::config("vessel mass must be positive"));
        }
        if !(self.iz > 0.0) {
            return Err(Error::config("vessel iz must be positive"));
        }
        if !(self.x_udot >= 0.0 && self.mass > self.x_udot) {
            return Err(Error::config("require mass > x_udot >= 0"));
        }
        if !(self.y_vdot >= 0.0 && self.mass > self.y_vdot) {
            return Err(Error::config("require mass > y_vdot >= 0"));
        }
        if !(self.n_rdot >= 0.0 && self.iz > self.n_rdot) {
            return Err(Error::config("require iz > n_rdot >= 0"));
        }
        if !(self.lever_arm > 0.0) {
            return Err(Error::config("lever_arm must be positive"));
        }
        for d in [
            self.du1, self.dv1, self.dr1, self.du2, self.dv2, self.dr2,
        ] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::config("damping coefficients must be finite and >= 0"));
            }
        }
        self.thrust_bounds.validate()
    }
}

/// Thrust applied to the left and right propellers, newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustCommand {
    pub tau_left: f64,
    pub tau_right: f64,
}

impl ThrustCommand {
    pub fn new(tau_left: f64, tau_right: f64) -> Self {
        Self { tau_left, tau_right }
    }
}

/// Clip both thruster commands to the given bounds.
pub fn clamp_thrust(cmd: ThrustCommand, bounds: ThrustBounds) -> ThrustCommand {
    ThrustCommand {
        tau_left: cmd.tau_left.clamp(bounds.tau_min, bounds.tau_max),
        tau_right: cmd.tau_right.clamp(bounds.tau_min, bounds.tau_max),
    }
}

/// Rotate a world-frame vector into the body frame of a vessel at heading `psi`.
pub fn world_to_body(vec: Vec2, psi: f64) -> Vec2 {
    vec.rotated(-psi)
}

/// Rotate a body-frame vector back to the world frame.
pub fn body_to_world(vec: Vec2, psi: f64) -> Vec2 {
    vec.rotated(psi)
}

/// Map a normalized command in `[-1, 1]` to a thrust within `bounds`.
///
/// Out-of-range inputs are clipped before mapping, so the result always lies
/// in `[tau_min, tau_max]`.
pub fn denormalize(a: f64, bounds: ThrustBounds) -> f64 {
    let a = a.clamp(-1.0, 1.0);
    bounds.tau_min + (a + 1.0) / 2.0 * (bounds.tau_max - bounds.tau_min)
}

/// Scale defender thrust bounds by the attacker's agility level.
pub fn scale_bounds(defender_bounds: ThrustBounds, agility: f64) -> Result<ThrustBounds> {
    if !(agility > 0.0 && agility.is_finite()) {
        return Err(Error::config(format!("agility must be > 0, got {agility}")));
    }
    Ok(ThrustBounds::new(
        agility * defender_bounds.tau_min,
        agility * defender_bounds.tau_max,
    ))
}

/// Time derivative of the state under the 3-DoF model.
fn derivative(s: &VesselState, cmd: ThrustCommand, p: &VesselParams) -> [f64; 6] {
    let mu = p.mass - p.x_udot;
    let mv = p.mass - p.y_vdot;
    let ir = p.iz - p.n_rdot;

    let du = (cmd.tau_left + cmd.tau_right + mv * s.v * s.r - (p.du1 + p.du2 * s.u.abs()) * s.u)
        / mu;
    let dv = (-mu * s.u * s.r - (p.dv1 + p.dv2 * s.v.abs()) * s.v) / mv;
    let dr = (p.lever_arm * (cmd.tau_right - cmd.tau_left) - (p.dr1 + p.dr2 * s.r.abs()) * s.r)
        / ir;

    let (sp, cp) = s.psi.sin_cos();
    let dx = s.u * cp - s.v * sp;
    let dy = s.u * sp + s.v * cp;

    [dx, dy, s.r, du, dv, dr]
}

fn add_scaled(s: &VesselState, k: &[f64; 6], h: f64) -> VesselState {
    VesselState {
        x: s.x + h * k[0],
        y: s.y + h * k[1],
        psi: s.psi + h * k[2],
        u: s.u + h * k[3],
        v: s.v + h * k[4],
        r: s.r + h * k[5],
    }
}

/// Advance the state by one classical RK4 step of length `dt`.
///
/// The heading is wrapped into `(-pi, pi]` after the step. Thrust commands
/// outside the vessel's bounds or non-finite inputs are rejected.
pub fn step_dynamics(
    state: &VesselState,
    cmd: ThrustCommand,
    params: &VesselParams,
    dt: f64,
) -> Result<VesselState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::runtime(format!("dt must be positive and finite, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::runtime("non-finite vessel state"));
    }
    if !(cmd.tau_left.is_finite() && cmd.tau_right.is_finite()) {
        return Err(Error::runtime("non-finite thrust command"));
    }
    if !params.thrust_bounds.contains(cmd.tau_left) || !params.thrust_bounds.contains(cmd.tau_right)
    {
        return Err(Error::runtime(format!(
            "thrust command ({}, {}) outside bounds [{}, {}]",
            cmd.tau_left, cmd.tau_right, params.thrust_bounds.tau_min, params.thrust_bounds.tau_max
        )));
    }

    let k1 = derivative(state, cmd, params);
    let k2 = derivative(&add_scaled(state, &k1, dt / 2.0), cmd, params);
    let k3 = derivative(&add_scaled(state, &k2, dt / 2.0), cmd, params);
    let k4 = derivative(&add_scaled(state, &k3, dt), cmd, params);

    let mut next = *state;
    next.x += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    next.y += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    next.psi += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    next.u += dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]);
    next.v += dt / 6.0 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4]);
    next.r += dt / 6.0 * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5]);
    next.psi = wrap_angle(next.psi);

    if !next.is_finite() {
        return Err(Error::runtime("vessel state diverged to non-finite values"));
    }
    Ok(next)
}
