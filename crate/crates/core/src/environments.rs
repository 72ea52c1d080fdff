//! Closed-loop simulation: plant, autopilot and learners as one ODE advanced
//! by fixed-step RK4, plus the perturbed target plant used to evaluate
//! transferred gains.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autopilot::{
    attitude_extraction, inner_loop, outer_loop, AttitudeSetpoint, AxisControllerState, AxisGains,
    AxisOutput, ExtractionLimits,
};
use crate::ct_rcac::{RcacDerivative, RcacError, RcacHyperparams, RcacState, RegressorSample};
use crate::integrator::{rk4_step, Integrable};
use crate::rigid_body::{
    dynamics_derivative, euler_from_rotation, euler_rate_map, DynamicsError, EulerAngles,
    RigidBodyDerivative, RigidBodyState, VehicleParams, WrenchCommand,
};

/// Axis labels in state order: outer r1..r3, inner roll/pitch/yaw.
pub const AXIS_NAMES: [&str; 6] = ["r1", "r2", "r3", "roll", "pitch", "yaw"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("learner on axis {axis}: {source}")]
    Rcac {
        axis: &'static str,
        #[source]
        source: RcacError,
    },
    #[error("simulation diverged at t = {t} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Gains are `θ* = P b` from the six learners.
    Learn,
    /// Gains are frozen.
    Fly,
}

/// One hyperparameter row per loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopHyperparams {
    pub outer_xy: RcacHyperparams,
    pub outer_z: RcacHyperparams,
    pub inner: RcacHyperparams,
}

impl Default for LoopHyperparams {
    fn default() -> Self {
        Self {
            outer_xy: RcacHyperparams::outer_horizontal(),
            outer_z: RcacHyperparams::outer_vertical(),
            inner: RcacHyperparams::inner(),
        }
    }
}

impl LoopHyperparams {
    pub fn for_axis(&self, axis: usize) -> &RcacHyperparams {
        match axis {
            0 | 1 => &self.outer_xy,
            2 => &self.outer_z,
            _ => &self.inner,
        }
    }

    pub fn validate(&self) -> Result<(), RcacError> {
        self.outer_xy.validate()?;
        self.outer_z.validate()?;
        self.inner.validate()
    }
}

/// Symmetric wrench limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Saturation {
    /// Thrust is clamped to `±max_thrust` (N).
    pub max_thrust: f64,
    /// Each torque component is clamped to `±max_torque` (N·m).
    pub max_torque: f64,
}

impl Saturation {
    pub fn for_vehicle(vehicle: &VehicleParams) -> Self {
        Self { max_thrust: 4.0 * vehicle.weight(), max_torque: 1.0 }
    }

    pub fn apply(&self, w: &WrenchCommand) -> WrenchCommand {
        WrenchCommand {
            thrust: w.thrust.clamp(-self.max_thrust, self.max_thrust),
            torque: w.torque.map(|t| t.clamp(-self.max_torque, self.max_torque)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub gravity_feedforward: bool,
    /// Symmetric clamp on every `∫e_v`.
    pub integral_clamp: Option<f64>,
    pub limits: ExtractionLimits,
    pub saturation: Option<Saturation>,
    pub yaw_reference: f64,
}

impl ControllerConfig {
    /// No feedforward, no clamp, default extraction limits, default
    /// saturation for the vehicle.
    pub fn standard(vehicle: &VehicleParams) -> Self {
        Self {
            gravity_feedforward: false,
            integral_clamp: None,
            limits: ExtractionLimits::default(),
            saturation: Some(Saturation::for_vehicle(vehicle)),
            yaw_reference: 0.0,
        }
    }
}

/// Software analogue of a realistic flight stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetPerturbations {
    /// Gaussian std for position (m), velocity (m/s), Euler angles (rad) and
    /// body rates (rad/s).
    pub meas_noise_sigma: [f64; 4],
    /// Sensor latency (s).
    pub meas_delay: f64,
    /// Zero-order-hold sample rate (Hz); `None` samples every plant step.
    pub sensor_rate: Option<f64>,
    /// First-order lag on thrust and torque (s); 0 disables it.
    pub actuator_tau: f64,
    pub mass_scale: f64,
    pub inertia_scale: f64,
}

impl Default for TargetPerturbations {
    fn default() -> Self {
        Self {
            meas_noise_sigma: [0.005, 0.01, 0.002, 0.005],
            meas_delay: 0.02,
            sensor_rate: Some(250.0),
            actuator_tau: 0.02,
            mass_scale: 1.0,
            inertia_scale: 1.0,
        }
    }
}

impl TargetPerturbations {
    /// Every perturbation switched off.
    pub fn none() -> Self {
        Self {
            meas_noise_sigma: [0.0; 4],
            meas_delay: 0.0,
            sensor_rate: None,
            actuator_tau: 0.0,
            mass_scale: 1.0,
            inertia_scale: 1.0,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        let values = self
            .meas_noise_sigma
            .iter()
            .chain([&self.meas_delay, &self.actuator_tau, &self.mass_scale, &self.inertia_scale]);
        for v in values {
            if !(v.is_finite() && *v >= 0.0) {
                return bad(format!("target perturbations must be finite and non-negative, got {v}"));
            }
        }
        if self.mass_scale == 0.0 || self.inertia_scale == 0.0 {
            return bad("mass_scale and inertia_scale must be positive".into());
        }
        if self.meas_delay > 0.0 && dt > self.meas_delay {
            return bad(format!("dt {dt} exceeds the measurement delay {}", self.meas_delay));
        }
        if let Some(rate) = self.sensor_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return bad(format!("sensor_rate must be positive, got {rate}"));
            }
            if dt > 1.0 / rate {
                return bad(format!("dt {dt} exceeds the sensor period {}", 1.0 / rate));
            }
        }
        Ok(())
    }

    fn needs_sampling(&self) -> bool {
        self.meas_noise_sigma.iter().any(|&s| s > 0.0)
            || self.meas_delay > 0.0
            || self.sensor_rate.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Environment {
    Source,
    Target(TargetPerturbations),
}

/// The control signal each learner filters into `u_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerInput {
    /// `u = Φ θ` as computed by the P-PI law.
    #[default]
    Commanded,
    /// The wrench reaching the plant after saturation and actuator lag,
    /// with the thrust resolved into the inertial frame for the outer axes.
    Realized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub vehicle: VehicleParams,
    pub controller: ControllerConfig,
    pub environment: Environment,
    pub mode: Mode,
    pub hyper: LoopHyperparams,
    pub learner_input: LearnerInput,
    /// Frozen gains in fly mode; the learners' starting point when learning.
    pub gains: [AxisGains; 6],
    pub dt: f64,
    pub seed: u64,
    pub log_rate_hz: f64,
}

impl SimConfig {
    /// Learning on the ideal plant with the standard hyperparameters.
    pub fn learning(vehicle: VehicleParams) -> Self {
        Self {
            controller: ControllerConfig::standard(&vehicle),
            vehicle,
            environment: Environment::Source,
            mode: Mode::Learn,
            hyper: LoopHyperparams::default(),
            learner_input: LearnerInput::default(),
            gains: [AxisGains::default(); 6],
            dt: 1e-3,
            seed: 0,
            log_rate_hz: 100.0,
        }
    }

    /// Frozen gains on the given environment.
    pub fn flying(vehicle: VehicleParams, gains: [AxisGains; 6], environment: Environment) -> Self {
        Self { mode: Mode::Fly, gains, environment, ..Self::learning(vehicle) }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.log_rate_hz.is_finite() && self.log_rate_hz > 0.0) {
            return Err(SimError::InvalidConfig("log rate must be positive".into()));
        }
        if self.gains.iter().any(|g| !g.is_finite()) {
            return Err(SimError::InvalidConfig("gains must be finite".into()));
        }
        self.hyper
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if let Environment::Target(p) = &self.environment {
            p.validate(self.dt)?;
        }
        Ok(())
    }
}

/// Anything that supplies a position command at time `t`.
pub trait ReferenceSignal: Sync {
    fn position(&self, t: f64) -> Vector3<f64>;
}

impl<F: Fn(f64) -> Vector3<f64> + Sync> ReferenceSignal for F {
    fn position(&self, t: f64) -> Vector3<f64> {
        self(t)
    }
}

/// What the autopilot sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub angles: EulerAngles,
    pub omega: Vector3<f64>,
}

impl Measurement {
    pub fn of(body: &RigidBodyState) -> Result<Self, DynamicsError> {
        Ok(Self {
            position: body.position,
            velocity: body.velocity,
            angles: euler_from_rotation(&body.attitude)?,
            omega: body.omega,
        })
    }

    fn with_noise(mut self, sigma: &[f64; 4], rng: &mut ChaCha8Rng) -> Self {
        let mut draw = |s: f64| -> f64 {
            if s > 0.0 {
                s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            } else {
                0.0
            }
        };
        for i in 0..3 {
            self.position[i] += draw(sigma[0]);
        }
        for i in 0..3 {
            self.velocity[i] += draw(sigma[1]);
        }
        self.angles.roll += draw(sigma[2]);
        self.angles.pitch += draw(sigma[2]);
        self.angles.yaw += draw(sigma[2]);
        for i in 0..3 {
            self.omega[i] += draw(sigma[3]);
        }
        self
    }
}

/// Delay line, zero-order hold and noise between plant and autopilot.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorPipeline {
    delay_steps: usize,
    buffer: VecDeque<Measurement>,
    sensor_rate: Option<f64>,
    last_sample: Option<u64>,
    sigma: [f64; 4],
    rng: ChaCha8Rng,
    held: Measurement,
}

impl SensorPipeline {
    fn new(p: &TargetPerturbations, dt: f64, seed: u64, initial: Measurement) -> Self {
        let delay_steps = (p.meas_delay / dt).round() as usize;
        Self {
            delay_steps,
            buffer: VecDeque::from(vec![initial; delay_steps + 1]),
            sensor_rate: p.sensor_rate,
            last_sample: None,
            sigma: p.meas_noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            held: initial,
        }
    }

    /// Records the true measurement at time `t` and refreshes the held output
    /// if a sensor sample is due.
    fn update(&mut self, t: f64, truth: Measurement) {
        self.buffer.push_back(truth);
        while self.buffer.len() > self.delay_steps + 1 {
            self.buffer.pop_front();
        }
        let due = match self.sensor_rate {
            Some(rate) => {
                let index = (t * rate + 1e-9).floor() as u64;
                if self.last_sample == Some(index) {
                    false
                } else {
                    self.last_sample = Some(index);
                    true
                }
            }
            None => true,
        };
        if due {
            let delayed = self.buffer[0];
            self.held = delayed.with_noise(&self.sigma, &mut self.rng);
        }
    }

    pub fn held(&self) -> &Measurement {
        &self.held
    }
}

/// The part of the closed-loop state advanced by the integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousState {
    pub body: RigidBodyState,
    pub integrators: [AxisControllerState; 6],
    pub learners: Option<Vec<RcacState>>,
    /// Realized wrench behind the actuator lag.
    pub actuator: Option<WrenchCommand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousDerivative {
    pub body: RigidBodyDerivative,
    pub integrators: [f64; 6],
    pub learners: Option<Vec<RcacDerivative>>,
    pub actuator: Option<WrenchCommand>,
}

impl Integrable for ContinuousState {
    type Derivative = ContinuousDerivative;

    fn advanced(&self, d: &ContinuousDerivative, h: f64) -> Self {
        Self {
            body: self.body.advanced(&d.body, h),
            integrators: std::array::from_fn(|i| AxisControllerState {
                ev_integral: self.integrators[i].ev_integral + d.integrators[i] * h,
            }),
            learners: match (&self.learners, &d.learners) {
                (Some(s), Some(ds)) => Some(s.iter().zip(ds).map(|(s, d)| s.advanced(d, h)).collect()),
                _ => None,
            },
            actuator: match (&self.actuator, &d.actuator) {
                (Some(w), Some(dw)) => Some(WrenchCommand {
                    thrust: w.thrust + dw.thrust * h,
                    torque: w.torque + dw.torque * h,
                }),
                _ => None,
            },
        }
    }
}

/// Full closed-loop state, continuous and discrete parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub t: f64,
    pub step: u64,
    pub continuous: ContinuousState,
    /// Last attitude setpoint, held when the desired force degenerates.
    pub setpoint: AttitudeSetpoint,
    pub sensor: Option<SensorPipeline>,
}

impl ClosedLoopState {
    /// The same state with the learners dropped, for continuing with frozen gains.
    pub fn frozen(mut self) -> Self {
        self.continuous.learners = None;
        self
    }
}

/// Signals produced by one derivative evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    pub desired_force: Vector3<f64>,
    pub setpoint: AttitudeSetpoint,
    pub tilt_saturated: bool,
    pub command: WrenchCommand,
    pub applied: WrenchCommand,
    pub axes: [AxisOutput; 6],
    pub gains: [AxisGains; 6],
}

/// The closed loop at a fixed configuration.
pub struct ClosedLoop<'a> {
    config: &'a SimConfig,
    plant: VehicleParams,
    reference: &'a dyn ReferenceSignal,
    sampled: bool,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(config: &'a SimConfig, reference: &'a dyn ReferenceSignal) -> Result<Self, SimError> {
        config.validate()?;
        let (plant, sampled) = match &config.environment {
            Environment::Source => (config.vehicle.clone(), false),
            Environment::Target(p) => {
                (config.vehicle.scaled(p.mass_scale, p.inertia_scale)?, p.needs_sampling())
            }
        };
        Ok(Self { config, plant, reference, sampled })
    }

    pub fn config(&self) -> &SimConfig {
        self.config
    }

    pub fn plant(&self) -> &VehicleParams {
        &self.plant
    }

    /// Vehicle at rest at `position`, level, controller integrators and
    /// filters at rest.
    pub fn initial_state(&self, position: Vector3<f64>) -> Result<ClosedLoopState, SimError> {
        let body = RigidBodyState::at_rest(position);
        let learners = match self.config.mode {
            Mode::Learn => Some(
                (0..6)
                    .map(|i| {
                        RcacState::with_initial_gains(self.config.hyper.for_axis(i), &self.config.gains[i].as_vector())
                    })
                    .collect(),
            ),
            Mode::Fly => None,
        };
        let actuator = match &self.config.environment {
            Environment::Target(p) if p.actuator_tau > 0.0 => Some(WrenchCommand::default()),
            _ => None,
        };
        let sensor = match &self.config.environment {
            Environment::Target(p) if self.sampled => {
                Some(SensorPipeline::new(p, self.config.dt, self.config.seed, Measurement::of(&body)?))
            }
            _ => None,
        };
        Ok(ClosedLoopState {
            t: 0.0,
            step: 0,
            continuous: ContinuousState {
                body,
                integrators: [AxisControllerState::default(); 6],
                learners,
                actuator,
            },
            setpoint: AttitudeSetpoint::default(),
            sensor,
        })
    }

    /// Gains in effect for a continuous state.
    pub fn gains(&self, x: &ContinuousState) -> [AxisGains; 6] {
        match &x.learners {
            Some(learners) => std::array::from_fn(|i| AxisGains::from_vector(&learners[i].gains())),
            None => self.config.gains,
        }
    }

    /// Position loop → attitude extraction → attitude loop → plant, plus the
    /// six learners when learning.
    pub fn derivative(
        &self,
        t: f64,
        x: &ContinuousState,
        setpoint_hold: &AttitudeSetpoint,
        held: Option<&Measurement>,
    ) -> Result<(ContinuousDerivative, StageOutputs), SimError> {
        let ctrl = &self.config.controller;
        let meas = match held {
            Some(m) => *m,
            None => Measurement::of(&x.body)?,
        };
        let gains = self.gains(x);
        let outer_gains = [gains[0], gains[1], gains[2]];
        let inner_gains = [gains[3], gains[4], gains[5]];
        let outer_states = [x.integrators[0], x.integrators[1], x.integrators[2]];
        let inner_states = [x.integrators[3], x.integrators[4], x.integrators[5]];

        let reference = self.reference.position(t);
        let outer = outer_loop(&reference, &meas.position, &meas.velocity, &outer_gains, &outer_states);
        let mut desired_force = outer.command;
        if ctrl.gravity_feedforward {
            desired_force[2] -= self.config.vehicle.weight();
        }
        let extraction = attitude_extraction(&desired_force, ctrl.yaw_reference, setpoint_hold, &ctrl.limits);
        let setpoint = extraction.setpoint;

        let rates = euler_rate_map(&meas.angles, &meas.omega)?;
        let inner = inner_loop(&setpoint.angles, &meas.angles, &rates, &inner_gains, &inner_states);

        let raw = WrenchCommand::new(setpoint.thrust, inner.command);
        let command = match &ctrl.saturation {
            Some(s) => s.apply(&raw),
            None => raw,
        };
        let (applied, actuator) = match (&x.actuator, &self.config.environment) {
            (Some(w), Environment::Target(p)) => (
                *w,
                Some(WrenchCommand {
                    thrust: (command.thrust - w.thrust) / p.actuator_tau,
                    torque: (command.torque - w.torque) / p.actuator_tau,
                }),
            ),
            _ => (command, None),
        };
        let body = dynamics_derivative(&x.body, &applied, &self.plant)?;

        let axes = [
            outer.axes[0],
            outer.axes[1],
            outer.axes[2],
            inner.axes[0],
            inner.axes[1],
            inner.axes[2],
        ];
        let integrators = std::array::from_fn(|i| {
            let ev = axes[i].ev;
            match ctrl.integral_clamp {
                Some(c) if (x.integrators[i].ev_integral >= c && ev > 0.0)
                    || (x.integrators[i].ev_integral <= -c && ev < 0.0) => 0.0,
                _ => ev,
            }
        });
        let learners = match &x.learners {
            Some(learners) => {
                let mut out = Vec::with_capacity(6);
                let us: [f64; 6] = match self.config.learner_input {
                    LearnerInput::Commanded => std::array::from_fn(|i| axes[i].u),
                    LearnerInput::Realized => {
                        let f = x.body.attitude * Vector3::z() * applied.thrust;
                        [f[0], f[1], f[2], applied.torque[0], applied.torque[1], applied.torque[2]]
                    }
                };
                for (i, learner) in learners.iter().enumerate() {
                    let sample = RegressorSample { phi: axes[i].regressor, u: us[i], z: axes[i].z };
                    let d = learner
                        .derivative(&sample, self.config.hyper.for_axis(i))
                        .map_err(|source| SimError::Rcac { axis: AXIS_NAMES[i], source })?;
                    out.push(d);
                }
                Some(out)
            }
            None => None,
        };
        Ok((
            ContinuousDerivative { body, integrators, learners, actuator },
            StageOutputs {
                desired_force,
                setpoint,
                tilt_saturated: extraction.saturated,
                command,
                applied,
                axes,
                gains,
            },
        ))
    }

    /// One RK4 step. Returns the signals evaluated at the start of the step.
    pub fn step(&self, s: &mut ClosedLoopState) -> Result<StageOutputs, SimError> {
        let dt = self.config.dt;
        if let Some(sensor) = &mut s.sensor {
            sensor.update(s.t, Measurement::of(&s.continuous.body)?);
        }
        let held = s.sensor.as_ref().map(|p| *p.held());
        let hold = s.setpoint;
        let mut first = None;
        let mut next = rk4_step(
            |t, x: &ContinuousState| {
                let (d, out) = self.derivative(t, x, &hold, held.as_ref())?;
                if first.is_none() {
                    first = Some(out);
                }
                Ok::<_, SimError>(d)
            },
            s.t,
            &s.continuous,
            dt,
        )
        .map_err(|e| match e {
            SimError::Dynamics(DynamicsError::NonFinite(what)) => {
                SimError::Diverged { t: s.t, reason: format!("non-finite {what}") }
            }
            other => other,
        })?;
        next.body.reorthonormalize();
        if let Some(c) = self.config.controller.integral_clamp {
            for st in next.integrators.iter_mut() {
                st.ev_integral = st.ev_integral.clamp(-c, c);
            }
        }
        let outputs = first.expect("rk4 evaluates the first stage");
        s.step += 1;
        s.t = s.step as f64 * dt;
        check_finite(&next, s.t)?;
        s.continuous = next;
        s.setpoint = outputs.setpoint;
        Ok(outputs)
    }
}

fn check_finite(x: &ContinuousState, t: f64) -> Result<(), SimError> {
    let diverged = |reason: String| Err(SimError::Diverged { t, reason });
    if let Err(DynamicsError::NonFinite(what)) = x.body.check_finite() {
        return diverged(format!("non-finite {what}"));
    }
    if x.integrators.iter().any(|s| !s.ev_integral.is_finite()) {
        return diverged("non-finite controller integrator".into());
    }
    if let Some(learners) = &x.learners {
        for (i, l) in learners.iter().enumerate() {
            if !(l.m.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite())) {
                return diverged(format!("non-finite learner state on axis {}", AXIS_NAMES[i]));
            }
        }
    }
    Ok(())
}

/// One logged row.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub angles: EulerAngles,
    pub thrust: f64,
    pub torque: Vector3<f64>,
    pub z: [f64; 6],
    pub gains: [AxisGains; 6],
}

impl TelemetryRow {
    fn new(t: f64, body: &RigidBodyState, out: &StageOutputs) -> Result<Self, SimError> {
        Ok(Self {
            t,
            position: body.position,
            angles: euler_from_rotation(&body.attitude)?,
            thrust: out.applied.thrust,
            torque: out.applied.torque,
            z: std::array::from_fn(|i| out.axes[i].z),
            gains: out.gains,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Telemetry {
    pub rows: Vec<TelemetryRow>,
}

impl Telemetry {
    pub fn header() -> Vec<String> {
        let mut cols: Vec<String> =
            ["t", "r1", "r2", "r3", "phi", "theta", "psi", "f", "tau1", "tau2", "tau3"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        cols.extend((1..=6).map(|i| format!("z{i}")));
        for (i, axis) in AXIS_NAMES.iter().enumerate() {
            let lp = if i < 3 { "outer" } else { "inner" };
            for g in ["kp1", "kp2", "ki"] {
                cols.push(format!("{lp}_{axis}_{g}"));
            }
        }
        cols
    }

    /// CSV with a header row. Floats use the shortest round-trip format, so
    /// equal telemetry gives byte-identical output.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![
                r.t,
                r.position[0],
                r.position[1],
                r.position[2],
                r.angles.roll,
                r.angles.pitch,
                r.angles.yaw,
                r.thrust,
                r.torque[0],
                r.torque[1],
                r.torque[2],
            ];
            fields.extend_from_slice(&r.z);
            for g in &r.gains {
                fields.extend_from_slice(&[g.kp1, g.kp2, g.ki]);
            }
            let line: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub telemetry: Telemetry,
    pub final_state: ClosedLoopState,
    pub final_gains: [AxisGains; 6],
    /// Steps on which the requested tilt was clamped.
    pub tilt_saturations: u64,
}

#[derive(Debug, Clone, Error)]
#[error("at t = {t} s: {error}")]
pub struct RunFailure {
    pub error: SimError,
    /// Simulation time of the failing step.
    pub t: f64,
    /// Everything logged before the failure.
    pub telemetry: Telemetry,
}

/// Simulates `[0, duration]` from rest at the origin.
pub fn run(
    config: &SimConfig,
    reference: &dyn ReferenceSignal,
    duration: f64,
) -> Result<RunOutput, RunFailure> {
    let fail = |error| RunFailure { error, t: 0.0, telemetry: Telemetry::default() };
    let cl = ClosedLoop::new(config, reference).map_err(fail)?;
    let state = cl.initial_state(Vector3::zeros()).map_err(fail)?;
    run_from(&cl, state, duration)
}

/// Continues a closed loop from `state` for `duration` seconds.
pub fn run_from(
    cl: &ClosedLoop<'_>,
    mut state: ClosedLoopState,
    duration: f64,
) -> Result<RunOutput, RunFailure> {
    let config = cl.config();
    let mut telemetry = Telemetry::default();
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(RunFailure {
            error: SimError::InvalidConfig(format!("duration must be non-negative, got {duration}")),
            t: state.t,
            telemetry,
        });
    }
    let steps = (duration / config.dt).round() as u64;
    let decimation = ((1.0 / (config.log_rate_hz * config.dt)).round() as u64).max(1);
    let mut tilt_saturations = 0;
    for k in 0..steps {
        let t = state.t;
        let body = state.continuous.body.clone();
        let out = match cl.step(&mut state) {
            Ok(out) => out,
            Err(error) => return Err(RunFailure { error, t, telemetry }),
        };
        if out.tilt_saturated {
            if tilt_saturations == 0 {
                log::warn!("requested thrust axis exceeded the tilt limit at t = {t:.3} s; clamping");
            }
            tilt_saturations += 1;
        }
        if k % decimation == 0 {
            match TelemetryRow::new(t, &body, &out) {
                Ok(row) => telemetry.rows.push(row),
                Err(error) => return Err(RunFailure { error, t, telemetry }),
            }
        }
    }
    let final_gains = cl.gains(&state.continuous);
    Ok(RunOutput { telemetry, final_state: state, final_gains, tilt_saturations })
}
