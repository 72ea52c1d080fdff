//! Cascaded position/attitude autopilot built from modified P-PI axes.
//!
//! Each axis evaluates
//!
//! ```text
//! e = r − y,  e_v = k_p1 e − ẏ,  u = k_p1 e + k_p2 e_v + k_i ∫e_v = Φ θ
//! ```
//!
//! with regressor `Φ = [e, e_v, ∫e_v]` and gains `θ = (k_p1, k_p2, k_i)`.

use nalgebra::{RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::rigid_body::{EulerAngles, GIMBAL_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGains {
    pub kp1: f64,
    pub kp2: f64,
    pub ki: f64,
}

impl AxisGains {
    pub fn new(kp1: f64, kp2: f64, ki: f64) -> Self {
        Self { kp1, kp2, ki }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.kp1, self.kp2, self.ki)
    }

    pub fn from_vector(theta: &Vector3<f64>) -> Self {
        Self::new(theta[0], theta[1], theta[2])
    }

    pub fn is_finite(&self) -> bool {
        self.kp1.is_finite() && self.kp2.is_finite() && self.ki.is_finite()
    }
}

/// Integrator of `e_v` for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisControllerState {
    pub ev_integral: f64,
}

/// Everything one axis produces at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisOutput {
    pub u: f64,
    pub regressor: RowVector3<f64>,
    pub ev: f64,
    /// Performance `z = y − r`.
    pub z: f64,
}

pub fn p_pi_axis(
    reference: f64,
    y: f64,
    y_dot: f64,
    gains: &AxisGains,
    state: &AxisControllerState,
) -> AxisOutput {
    let e = reference - y;
    let ev = gains.kp1 * e - y_dot;
    let regressor = RowVector3::new(e, ev, state.ev_integral);
    let u = (regressor * gains.as_vector())[0];
    AxisOutput { u, regressor, ev, z: y - reference }
}

/// Three decoupled axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOutput {
    pub command: Vector3<f64>,
    pub axes: [AxisOutput; 3],
}

fn three_axes(
    reference: &Vector3<f64>,
    y: &Vector3<f64>,
    y_dot: &Vector3<f64>,
    gains: &[AxisGains; 3],
    states: &[AxisControllerState; 3],
) -> LoopOutput {
    let axes: [AxisOutput; 3] =
        std::array::from_fn(|i| p_pi_axis(reference[i], y[i], y_dot[i], &gains[i], &states[i]));
    LoopOutput { command: Vector3::new(axes[0].u, axes[1].u, axes[2].u), axes }
}

/// Position loop: desired inertial force `F_d = (f_r1, f_r2, f_r3)`.
pub fn outer_loop(
    reference: &Vector3<f64>,
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    gains: &[AxisGains; 3],
    states: &[AxisControllerState; 3],
) -> LoopOutput {
    three_axes(reference, position, velocity, gains, states)
}

/// Attitude loop: body torque from Euler-angle errors. `rates` are Euler
/// angle rates `Θ̇ = S(Θ) ω`.
pub fn inner_loop(
    desired: &EulerAngles,
    angles: &EulerAngles,
    rates: &Vector3<f64>,
    gains: &[AxisGains; 3],
    states: &[AxisControllerState; 3],
) -> LoopOutput {
    three_axes(&desired.to_vector(), &angles.to_vector(), rates, gains, states)
}

/// Desired attitude and thrust.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeSetpoint {
    pub angles: EulerAngles,
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionLimits {
    /// Below this force magnitude the previous attitude is held (N).
    pub force_epsilon: f64,
    /// Maximum angle between the thrust axis and the vertical (rad).
    pub tilt_limit: f64,
}

impl Default for ExtractionLimits {
    fn default() -> Self {
        Self { force_epsilon: 1e-6, tilt_limit: 60f64.to_radians() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extraction {
    pub setpoint: AttitudeSetpoint,
    /// The requested axis was tilted beyond the limit and was clamped.
    pub saturated: bool,
}

/// Aligns body `e3` with the desired force: `f_d = −‖F_d‖`, `n = F_d / f_d`,
/// and `Θ_d` solves `R(Θ_d) e3 = n` with yaw `ψ_d`.
///
/// If the requested axis is tilted past the limit (including pointing
/// upward, `n₃ ≤ 0`), its horizontal part is rescaled onto the limit cone and
/// the thrust becomes the projection of `F_d` on the clamped axis.
pub fn attitude_extraction(
    force: &Vector3<f64>,
    yaw: f64,
    previous: &AttitudeSetpoint,
    limits: &ExtractionLimits,
) -> Extraction {
    let magnitude = force.norm();
    if magnitude < limits.force_epsilon {
        return Extraction {
            setpoint: AttitudeSetpoint {
                angles: EulerAngles { yaw, ..previous.angles },
                thrust: 0.0,
            },
            saturated: false,
        };
    }
    let mut thrust = -magnitude;
    let mut axis = force / thrust;
    let (sin_lim, cos_lim) = limits.tilt_limit.sin_cos();
    let saturated = axis[2] < cos_lim;
    if saturated {
        let horizontal = axis.xy().norm();
        axis = if horizontal > 0.0 {
            let scale = sin_lim / horizontal;
            Vector3::new(axis[0] * scale, axis[1] * scale, cos_lim)
        } else {
            Vector3::z()
        };
        thrust = force.dot(&axis);
    }
    let (sy, cy) = yaw.sin_cos();
    let roll = (sy * axis[0] - cy * axis[1]).clamp(-1.0, 1.0).asin();
    let pitch = (cy * axis[0] + sy * axis[1])
        .atan2(axis[2])
        .clamp(-std::f64::consts::FRAC_PI_2 + 2.0 * GIMBAL_EPSILON, std::f64::consts::FRAC_PI_2 - 2.0 * GIMBAL_EPSILON);
    Extraction {
        setpoint: AttitudeSetpoint { angles: EulerAngles { roll, pitch, yaw }, thrust },
        saturated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid_body::rotation_from_euler;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const WEIGHT: f64 = 1.56 * 9.81;

    #[test]
    fn zero_gains_give_zero_control() {
        let out = p_pi_axis(3.0, -1.0, 2.0, &AxisGains::default(), &AxisControllerState { ev_integral: 5.0 });
        assert_eq!(out.u, 0.0);
        assert_eq!(out.regressor, RowVector3::new(4.0, -2.0, 5.0));
        assert_eq!(out.z, -4.0);
    }

    #[test]
    fn vertical_waypoint_gains() {
        let gains = AxisGains::new(0.6114, 0.4296, 0.1753);
        let out = p_pi_axis(1.0, 0.0, 0.0, &gains, &AxisControllerState::default());
        assert_relative_eq!(out.ev, 0.6114, epsilon = 1e-15);
        assert_relative_eq!(out.u, 0.6114 + 0.4296 * 0.6114, epsilon = 1e-15);
        assert_relative_eq!(out.u, 0.87406, epsilon = 1e-5);
    }

    #[test]
    fn roll_step_with_inner_gains() {
        let gains = AxisGains::new(0.0597, 0.0249, 0.0471);
        let out = p_pi_axis(0.1, 0.0, 0.0, &gains, &AxisControllerState::default());
        assert_relative_eq!(out.ev, 0.00597, epsilon = 1e-15);
        assert_relative_eq!(out.u, 0.0061187, epsilon = 1e-7);
    }

    #[test]
    fn explicit_law_equals_parameterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let g = AxisGains::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (r, y, yd) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let st = AxisControllerState { ev_integral: rng.random_range(-10.0..10.0) };
            let out = p_pi_axis(r, y, yd, &g, &st);
            let e = r - y;
            let ev = g.kp1 * e - yd;
            let explicit = g.kp1 * e + g.kp2 * ev + g.ki * st.ev_integral;
            assert!((out.u - explicit).abs() <= 1e-12 * (1.0 + explicit.abs()));
        }
    }

    #[test]
    fn outer_loop_at_reference_is_silent_and_decoupled() {
        let gains = [AxisGains::new(0.2, 0.5, 0.1); 3];
        let states = [AxisControllerState::default(); 3];
        let r = Vector3::new(1.0, 1.0, 1.0);
        let out = outer_loop(&r, &r, &Vector3::zeros(), &gains, &states);
        assert_eq!(out.command, Vector3::zeros());
        let moved = outer_loop(&Vector3::new(2.0, 1.0, 1.0), &r, &Vector3::zeros(), &gains, &states);
        assert!(moved.command[0] != 0.0);
        assert_eq!(moved.command[1], 0.0);
        assert_eq!(moved.command[2], 0.0);
    }

    #[test]
    fn inner_loop_examples() {
        let gains = [AxisGains::new(0.06, 0.025, 0.047); 3];
        let states = [AxisControllerState::default(); 3];
        let a = EulerAngles::new(0.1, -0.2, 0.3);
        assert_eq!(inner_loop(&a, &a, &Vector3::zeros(), &gains, &states).command, Vector3::zeros());
        let zero = [AxisGains::default(); 3];
        let out = inner_loop(&a, &EulerAngles::default(), &Vector3::new(1.0, 2.0, 3.0), &zero, &states);
        assert_eq!(out.command, Vector3::zeros());
        assert_eq!(out.axes[0].z, -0.1);
    }

    #[test]
    fn level_hover_extraction() {
        let prev = AttitudeSetpoint::default();
        let limits = ExtractionLimits::default();
        let ex = attitude_extraction(&Vector3::new(0.0, 0.0, -WEIGHT), 0.0, &prev, &limits);
        assert_eq!(ex.setpoint.angles, EulerAngles::default());
        assert_relative_eq!(ex.setpoint.thrust, -15.3036, epsilon = 1e-12);
        let ex = attitude_extraction(&Vector3::new(0.0, 0.0, -WEIGHT), 1.0, &prev, &limits);
        assert_relative_eq!(ex.setpoint.angles.roll, 0.0);
        assert_relative_eq!(ex.setpoint.angles.pitch, 0.0);
        assert_eq!(ex.setpoint.angles.yaw, 1.0);
        assert!(!ex.saturated);
    }

    #[test]
    fn extraction_reconstructs_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let limits = ExtractionLimits { tilt_limit: 80f64.to_radians(), ..Default::default() };
        let mut checked = 0;
        while checked < 500 {
            let f = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-40.0..0.0));
            let n3 = -f[2] / f.norm();
            if n3 <= 0.3 {
                continue;
            }
            let yaw = rng.random_range(-3.0..3.0);
            let ex = attitude_extraction(&f, yaw, &AttitudeSetpoint::default(), &limits);
            assert!(!ex.saturated);
            assert_eq!(ex.setpoint.angles.yaw, yaw);
            let rebuilt = rotation_from_euler(&ex.setpoint.angles) * Vector3::z() * ex.setpoint.thrust;
            assert!((rebuilt - f).norm() < 1e-9, "{rebuilt} vs {f}");
            checked += 1;
        }
    }

    #[test]
    fn degenerate_force_holds_previous_attitude() {
        let prev = AttitudeSetpoint { angles: EulerAngles::new(0.1, 0.2, 0.0), thrust: -3.0 };
        let ex = attitude_extraction(&Vector3::new(1e-9, 0.0, 0.0), 0.0, &prev, &ExtractionLimits::default());
        assert_eq!(ex.setpoint.angles, prev.angles);
        assert_eq!(ex.setpoint.thrust, 0.0);
    }

    #[test]
    fn upward_axis_is_clamped_to_tilt_limit() {
        let limits = ExtractionLimits::default();
        let ex = attitude_extraction(&Vector3::new(3.0, 0.0, 5.0), 0.0, &AttitudeSetpoint::default(), &limits);
        assert!(ex.saturated);
        let axis = rotation_from_euler(&ex.setpoint.angles) * Vector3::z();
        assert_relative_eq!(axis[2], limits.tilt_limit.cos(), epsilon = 1e-12);
        // pure downward request: level attitude, thrust projected onto e3
        let ex = attitude_extraction(&Vector3::new(0.0, 0.0, 5.0), 0.0, &AttitudeSetpoint::default(), &limits);
        assert!(ex.saturated);
        assert_eq!(ex.setpoint.angles.pitch, 0.0);
        assert_eq!(ex.setpoint.thrust, 5.0);
    }
}
