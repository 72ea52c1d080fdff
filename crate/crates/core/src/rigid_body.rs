//! 12-DOF multirotor equations of motion and 3-2-1 Euler-angle kinematics.
//!
//! Frames: the inertial frame is NED (third axis down, gravity `+g e3`) and
//! the attitude matrix `O` resolves body-frame vectors in the inertial frame,
//! so `Ȯ = O ω×`. Thrust acts along body `e3` and is negative at hover.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::integrator::Integrable;

/// Distance from ±π/2 pitch at which the Euler parameterization is rejected.
pub const GIMBAL_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("pitch {pitch} rad is within {GIMBAL_EPSILON} rad of gimbal lock")]
    GimbalLock { pitch: f64 },
}

fn ensure_finite<'a>(
    field: &'static str,
    mut values: impl Iterator<Item = &'a f64>,
) -> Result<(), DynamicsError> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite(field))
    }
}

/// Mass properties of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    mass: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    gravity: f64,
}

impl VehicleParams {
    pub fn new(mass: f64, inertia: Matrix3<f64>, gravity: f64) -> Result<Self, DynamicsError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(DynamicsError::InvalidParams(format!("mass must be positive, got {mass}")));
        }
        if !(gravity.is_finite() && gravity > 0.0) {
            return Err(DynamicsError::InvalidParams(format!(
                "gravity must be positive, got {gravity}"
            )));
        }
        ensure_finite("inertia", inertia.iter())?;
        if (inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm() {
            return Err(DynamicsError::InvalidParams("inertia must be symmetric".into()));
        }
        if inertia.cholesky().is_none() {
            return Err(DynamicsError::InvalidParams("inertia must be positive definite".into()));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| DynamicsError::InvalidParams("inertia is singular".into()))?;
        Ok(Self { mass, inertia, inertia_inv, gravity })
    }

    /// The airframe used for learning: m = 1.56 kg, J = diag(0.03, 0.03, 0.05) kg·m².
    pub fn x500() -> Self {
        Self::new(1.56, Matrix3::from_diagonal(&Vector3::new(0.03, 0.03, 0.05)), 9.81)
            .expect("nominal airframe is valid")
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// Weight magnitude `m g`.
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Copy with mass and inertia multiplied by the given factors.
    pub fn scaled(&self, mass_scale: f64, inertia_scale: f64) -> Result<Self, DynamicsError> {
        Self::new(self.mass * mass_scale, self.inertia * inertia_scale, self.gravity)
    }
}

/// Position, velocity, attitude and body rates of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body-to-inertial rotation.
    pub attitude: Matrix3<f64>,
    /// Body angular velocity relative to the inertial frame, body coordinates.
    pub omega: Vector3<f64>,
}

impl Default for RigidBodyState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }

    pub fn check_finite(&self) -> Result<(), DynamicsError> {
        ensure_finite("position", self.position.iter())?;
        ensure_finite("velocity", self.velocity.iter())?;
        ensure_finite("attitude", self.attitude.iter())?;
        ensure_finite("omega", self.omega.iter())
    }

    /// ‖OᵀO − I‖_F
    pub fn orthonormality_error(&self) -> f64 {
        (self.attitude.transpose() * self.attitude - Matrix3::identity()).norm()
    }

    /// Inertial angular momentum `O J ω`.
    pub fn angular_momentum(&self, params: &VehicleParams) -> Vector3<f64> {
        self.attitude * (params.inertia * self.omega)
    }

    /// Projects the attitude back onto SO(3).
    pub fn reorthonormalize(&mut self) {
        self.attitude = orthonormalize(&self.attitude);
    }
}

/// Time derivative of a [`RigidBodyState`].
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Matrix3<f64>,
    pub omega: Vector3<f64>,
}

impl Integrable for RigidBodyState {
    type Derivative = RigidBodyDerivative;

    fn advanced(&self, d: &RigidBodyDerivative, h: f64) -> Self {
        Self {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + d.attitude * h,
            omega: self.omega + d.omega * h,
        }
    }
}

/// Scalar thrust along body `e3` and body torque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WrenchCommand {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

impl WrenchCommand {
    pub fn new(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { thrust, torque }
    }

    pub fn check_finite(&self) -> Result<(), DynamicsError> {
        ensure_finite("thrust", std::iter::once(&self.thrust))?;
        ensure_finite("torque", self.torque.iter())
    }
}

/// 3-2-1 Euler angles (roll, pitch, yaw) in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    fn check_gimbal(&self) -> Result<(), DynamicsError> {
        if self.pitch.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_EPSILON {
            Err(DynamicsError::GimbalLock { pitch: self.pitch })
        } else {
            Ok(())
        }
    }
}

/// Skew-symmetric matrix `v×` such that `v× w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Equations of motion: `ṙ = v`, `m v̇ = m g e3 + O e3 f`, `Ȯ = O ω×`,
/// `J ω̇ = τ − ω × J ω`.
pub fn dynamics_derivative(
    state: &RigidBodyState,
    wrench: &WrenchCommand,
    params: &VehicleParams,
) -> Result<RigidBodyDerivative, DynamicsError> {
    state.check_finite()?;
    wrench.check_finite()?;
    let thrust_axis = state.attitude.column(2).into_owned();
    let acceleration =
        Vector3::new(0.0, 0.0, params.gravity) + thrust_axis * (wrench.thrust / params.mass);
    let gyroscopic = state.omega.cross(&(params.inertia * state.omega));
    Ok(RigidBodyDerivative {
        position: state.velocity,
        velocity: acceleration,
        attitude: state.attitude * skew(&state.omega),
        omega: params.inertia_inv * (wrench.torque - gyroscopic),
    })
}

/// `O = R3(ψ) R2(θ) R1(φ)`: yaw, then pitch, then roll.
pub fn rotation_from_euler(angles: &EulerAngles) -> Matrix3<f64> {
    let (sf, cf) = angles.roll.sin_cos();
    let (st, ct) = angles.pitch.sin_cos();
    let (sp, cp) = angles.yaw.sin_cos();
    Matrix3::new(
        cp * ct,
        cp * st * sf - sp * cf,
        cp * st * cf + sp * sf,
        sp * ct,
        sp * st * sf + cp * cf,
        sp * st * cf - cp * sf,
        -st,
        ct * sf,
        ct * cf,
    )
}

pub fn euler_from_rotation(attitude: &Matrix3<f64>) -> Result<EulerAngles, DynamicsError> {
    ensure_finite("attitude", attitude.iter())?;
    let pitch = (-attitude[(2, 0)]).clamp(-1.0, 1.0).asin();
    let angles = EulerAngles {
        roll: attitude[(2, 1)].atan2(attitude[(2, 2)]),
        pitch,
        yaw: attitude[(1, 0)].atan2(attitude[(0, 0)]),
    };
    angles.check_gimbal()?;
    Ok(angles)
}

/// The 3-2-1 rate map `S(Θ)` with `Θ̇ = S(Θ) ω`.
pub fn euler_rate_matrix(angles: &EulerAngles) -> Result<Matrix3<f64>, DynamicsError> {
    angles.check_gimbal()?;
    let (sf, cf) = angles.roll.sin_cos();
    let (st, ct) = angles.pitch.sin_cos();
    let tt = st / ct;
    Ok(Matrix3::new(
        1.0,
        sf * tt,
        cf * tt,
        0.0,
        cf,
        -sf,
        0.0,
        sf / ct,
        cf / ct,
    ))
}

pub fn euler_rate_map(
    angles: &EulerAngles,
    omega: &Vector3<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    Ok(euler_rate_matrix(angles)? * omega)
}

/// Polar projection onto the orthogonal group via Newton iteration
/// `X ← (3X − X XᵀX) / 2`, which converges quadratically near SO(3).
pub fn orthonormalize(attitude: &Matrix3<f64>) -> Matrix3<f64> {
    let mut x = *attitude;
    for _ in 0..6 {
        let gram = x.transpose() * x;
        if (gram - Matrix3::identity()).norm() < 1e-15 {
            break;
        }
        x *= Matrix3::identity() * 1.5 - gram * 0.5;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_angles(rng: &mut ChaCha8Rng) -> EulerAngles {
        EulerAngles::new(
            rng.random_range(-PI..PI),
            rng.random_range(-1.4..1.4),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let params = VehicleParams::x500();
        let wrench = WrenchCommand::new(-params.weight(), Vector3::zeros());
        assert_relative_eq!(wrench.thrust, -15.3036, epsilon = 1e-12);
        let d = dynamics_derivative(&RigidBodyState::default(), &wrench, &params).unwrap();
        assert_eq!(d.position, Vector3::zeros());
        assert_eq!(d.velocity, Vector3::zeros());
        assert_eq!(d.attitude, Matrix3::zeros());
        assert_eq!(d.omega, Vector3::zeros());
    }

    #[test]
    fn free_fall_accelerates_down() {
        let params = VehicleParams::x500();
        let d = dynamics_derivative(&RigidBodyState::default(), &WrenchCommand::default(), &params)
            .unwrap();
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, 9.81));
    }

    #[test]
    fn roll_torque_on_diagonal_inertia() {
        let params = VehicleParams::x500();
        let wrench = WrenchCommand::new(0.0, Vector3::new(0.03, 0.0, 0.0));
        let d = dynamics_derivative(&RigidBodyState::default(), &wrench, &params).unwrap();
        assert_relative_eq!(d.omega, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_inputs_name_the_field() {
        let params = VehicleParams::x500();
        let mut state = RigidBodyState::default();
        state.velocity[1] = f64::NAN;
        let err = dynamics_derivative(&state, &WrenchCommand::default(), &params).unwrap_err();
        assert_eq!(err, DynamicsError::NonFinite("velocity"));
        let wrench = WrenchCommand::new(f64::INFINITY, Vector3::zeros());
        let err = dynamics_derivative(&RigidBodyState::default(), &wrench, &params).unwrap_err();
        assert_eq!(err, DynamicsError::NonFinite("thrust"));
    }

    #[test]
    fn invalid_params_rejected() {
        let j = Matrix3::identity();
        assert!(VehicleParams::new(0.0, j, 9.81).is_err());
        assert!(VehicleParams::new(1.0, j, -1.0).is_err());
        assert!(VehicleParams::new(1.0, -j, 9.81).is_err());
        let mut asym = j;
        asym[(0, 1)] = 0.1;
        assert!(VehicleParams::new(1.0, asym, 9.81).is_err());
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_from_euler(&EulerAngles::default()), Matrix3::identity());
        let yaw = rotation_from_euler(&EulerAngles::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(yaw * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        let roll = rotation_from_euler(&EulerAngles::new(PI, 0.0, 0.0));
        assert_relative_eq!(
            roll,
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rotation_matches_axis_composition() {
        let angles = EulerAngles::new(0.3, -0.7, 2.1);
        let composed = Rotation3::from_axis_angle(&Vector3::z_axis(), angles.yaw)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), angles.pitch)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), angles.roll);
        assert_relative_eq!(rotation_from_euler(&angles), *composed.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn euler_round_trip() {
        assert_eq!(euler_from_rotation(&Matrix3::identity()).unwrap(), EulerAngles::default());
        let angles = EulerAngles::new(0.1, -0.2, 0.3);
        let back = euler_from_rotation(&rotation_from_euler(&angles)).unwrap();
        assert_relative_eq!(back.to_vector(), angles.to_vector(), epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let rot = *Rotation3::new(axis * rng.random_range(0.0..PI)).matrix();
            match euler_from_rotation(&rot) {
                Ok(angles) => {
                    let err = (rotation_from_euler(&angles) - rot).norm();
                    assert!(err < 1e-10, "round trip error {err}");
                }
                Err(DynamicsError::GimbalLock { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn gimbal_lock_detected() {
        let near = EulerAngles::new(0.0, FRAC_PI_2 - 1e-4, 0.0);
        assert!(matches!(
            euler_rate_map(&near, &Vector3::x()),
            Err(DynamicsError::GimbalLock { .. })
        ));
        assert!(matches!(
            euler_from_rotation(&rotation_from_euler(&near)),
            Err(DynamicsError::GimbalLock { .. })
        ));
    }

    #[test]
    fn rate_map_is_identity_when_level() {
        let omega = Vector3::new(0.4, -0.2, 1.5);
        assert_eq!(euler_rate_map(&EulerAngles::default(), &omega).unwrap(), omega);
    }

    #[test]
    fn rate_map_matches_finite_differences() {
        // Central differences of euler_from_rotation along the exact flow
        // O(t) = O₀ exp(t ω×).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let angles = random_angles(&mut rng);
            let omega = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let o = rotation_from_euler(&angles);
            let fwd = euler_from_rotation(&(o * Rotation3::new(omega * h).matrix())).unwrap();
            let bwd = euler_from_rotation(&(o * Rotation3::new(-omega * h).matrix())).unwrap();
            let mut diff = fwd.to_vector() - bwd.to_vector();
            for d in diff.iter_mut() {
                // unwrap ±π crossings of roll/yaw
                if *d > PI {
                    *d -= 2.0 * PI;
                } else if *d < -PI {
                    *d += 2.0 * PI;
                }
            }
            let numeric = diff / (2.0 * h);
            let analytic = euler_rate_map(&angles, &omega).unwrap();
            assert!((numeric - analytic).norm() < 1e-6, "{numeric} vs {analytic}");
        }
    }

    #[test]
    fn orthonormalize_projects_perturbed_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rot = rotation_from_euler(&random_angles(&mut rng));
        let noisy = rot + Matrix3::from_fn(|_, _| rng.random_range(-1e-4..1e-4));
        let fixed = orthonormalize(&noisy);
        assert!((fixed.transpose() * fixed - Matrix3::identity()).norm() < 1e-14);
        assert_relative_eq!(fixed.determinant(), 1.0, epsilon = 1e-12);
        assert!((fixed - rot).norm() < 1e-3);
    }
}
