//! Scenario files: JSON, unknown keys rejected, every default resolved.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::gains::{GainsDocument, GainsError};
use super::reference::{Reference, Trajectory};
use crate::autopilot::{AxisGains, ExtractionLimits};
use crate::environments::{
    ControllerConfig, Environment, LearnerInput, LoopHyperparams, Mode, Saturation, SimConfig,
};
use crate::rigid_body::VehicleParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Schema { path: String, source: serde_path_to_error::Error<serde_json::Error> },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gains(#[from] GainsError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSpec {
    pub mass: f64,
    /// Principal moments (kg·m²).
    pub inertia: [f64; 3],
    pub gravity: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self { mass: 1.56, inertia: [0.03, 0.03, 0.05], gravity: 9.81 }
    }
}

impl VehicleSpec {
    pub fn params(&self) -> Result<VehicleParams, ConfigError> {
        VehicleParams::new(self.mass, Matrix3::from_diagonal(&Vector3::from(self.inertia)), self.gravity)
            .map_err(|e| ConfigError::Invalid(format!("vehicle: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSpec {
    pub dt: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationSpec {
    pub enabled: bool,
    /// Defaults to four times the vehicle weight (N).
    pub max_thrust: Option<f64>,
    pub max_torque: f64,
}

impl Default for SaturationSpec {
    fn default() -> Self {
        Self { enabled: true, max_thrust: None, max_torque: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSpec {
    pub gravity_feedforward: bool,
    pub integral_clamp: Option<f64>,
    pub tilt_limit_deg: f64,
    pub force_epsilon: f64,
    pub saturation: SaturationSpec,
    pub learner_input: LearnerInput,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        let limits = ExtractionLimits::default();
        Self {
            gravity_feedforward: false,
            integral_clamp: None,
            tilt_limit_deg: 60.0,
            force_epsilon: limits.force_epsilon,
            saturation: SaturationSpec::default(),
            learner_input: LearnerInput::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub log_rate_hz: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, log_rate_hz: 100.0 }
    }
}

fn default_duration() -> f64 {
    100.0
}

fn default_mode() -> Mode {
    Mode::Learn
}

fn default_environment() -> Environment {
    Environment::Source
}

/// The on-disk scenario. Only `trajectory` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub trajectory: Trajectory,
    #[serde(default)]
    pub z_up: bool,
    #[serde(default)]
    pub yaw_reference: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub hyperparams: LoopHyperparams,
    #[serde(default)]
    pub controller: ControllerSpec,
    /// Frozen gains for `fly`, or the learners' starting point for `learn`
    /// (zero when absent). Relative paths resolve against the config file.
    #[serde(default)]
    pub gains_file: Option<PathBuf>,
    #[serde(default = "default_environment")]
    pub environment: Environment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioFile {
    /// A waypoint scenario with every other field at its default.
    pub fn waypoint() -> Self {
        Self::from_json(r#"{"trajectory":{"kind":"waypoint"}}"#, "builtin").expect("builtin scenario")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|source| ConfigError::Schema { path: origin.to_string(), source })
    }

    pub fn from_value(value: serde_json::Value, origin: &str) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(value)
            .map_err(|source| ConfigError::Schema { path: origin.to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut file = Self::from_json(&text, &path.display().to_string())?;
        if let (Some(g), Some(dir)) = (&file.gains_file, path.parent()) {
            if g.is_relative() && dir.join(g).exists() {
                file.gains_file = Some(dir.join(g));
            }
        }
        Ok(file)
    }

    /// Validates the file and fills in every vehicle-dependent default.
    pub fn resolve(mut self) -> Result<Scenario, ConfigError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.integrator.dt.is_finite() && self.integrator.dt > 0.0) {
            return invalid(format!("integrator.dt must be positive, got {}", self.integrator.dt));
        }
        if !self.yaw_reference.is_finite() {
            return invalid("yaw_reference must be finite");
        }
        self.trajectory.validate().map_err(ConfigError::Invalid)?;
        let vehicle = self.vehicle.params()?;
        let c = &mut self.controller;
        if !(c.tilt_limit_deg > 0.0 && c.tilt_limit_deg < 90.0) {
            return invalid(format!("controller.tilt_limit_deg must lie in (0, 90), got {}", c.tilt_limit_deg));
        }
        if !(c.force_epsilon.is_finite() && c.force_epsilon > 0.0) {
            return invalid("controller.force_epsilon must be positive");
        }
        if let Some(clamp) = c.integral_clamp {
            if !(clamp.is_finite() && clamp > 0.0) {
                return invalid("controller.integral_clamp must be positive");
            }
        }
        let max_thrust = *c.saturation.max_thrust.get_or_insert(4.0 * vehicle.weight());
        if !(max_thrust > 0.0 && c.saturation.max_torque > 0.0) {
            return invalid("saturation limits must be positive");
        }
        let gains_doc = match (&self.gains_file, self.mode) {
            (Some(path), _) => Some(GainsDocument::load(path)?),
            (None, Mode::Fly) => return invalid("mode fly requires a gains file"),
            (None, Mode::Learn) => None,
        };
        let controller = ControllerConfig {
            gravity_feedforward: c.gravity_feedforward,
            integral_clamp: c.integral_clamp,
            limits: ExtractionLimits { force_epsilon: c.force_epsilon, tilt_limit: c.tilt_limit_deg.to_radians() },
            saturation: c
                .saturation
                .enabled
                .then_some(Saturation { max_thrust, max_torque: c.saturation.max_torque }),
            yaw_reference: self.yaw_reference,
        };
        let sim = SimConfig {
            vehicle,
            controller,
            environment: self.environment.clone(),
            mode: self.mode,
            hyper: self.hyperparams.clone(),
            learner_input: c.learner_input,
            gains: gains_doc.as_ref().map(|d| d.to_array()).unwrap_or([AxisGains::default(); 6]),
            dt: self.integrator.dt,
            seed: self.seed,
            log_rate_hz: self.output.log_rate_hz,
        };
        sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let reference = Reference::new(self.trajectory.clone(), self.z_up);
        Ok(Scenario { file: self, sim, reference, gains: gains_doc })
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// The fully resolved file, as echoed next to the outputs.
    pub file: ScenarioFile,
    pub sim: SimConfig,
    pub reference: Reference,
    pub gains: Option<GainsDocument>,
}

impl Scenario {
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }

    /// SHA-256 of the resolved JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved_json().as_bytes()))
    }

    pub fn duration(&self) -> f64 {
        self.file.duration
    }

    /// Writes `config.resolved.json` into `dir`, creating it if needed.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf, ConfigError> {
        let io = |source| ConfigError::Io { path: dir.display().to_string(), source };
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join("config.resolved.json");
        std::fs::write(&path, self.resolved_json()).map_err(io)?;
        Ok(path)
    }
}

/// Reads, validates and resolves a scenario file.
pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    ScenarioFile::read(path)?.resolve()
}
