//! Position commands.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::environments::ReferenceSignal;

/// Constant position `target` for every `t`.
pub fn waypoint_reference(_t: f64, target: &Vector3<f64>) -> Vector3<f64> {
    *target
}

/// `(cos ωt, sin ωt, ωt)`.
pub fn helix_reference(t: f64, omega: f64) -> Vector3<f64> {
    let a = omega * t;
    Vector3::new(a.cos(), a.sin(), a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Trajectory {
    Waypoint {
        #[serde(default = "default_waypoint")]
        target: [f64; 3],
    },
    Helix {
        #[serde(default = "default_omega")]
        omega: f64,
    },
    /// Rows `[t, r1, r2, r3]`, linearly interpolated and held past either end.
    Custom { samples: Vec<[f64; 4]> },
}

fn default_waypoint() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn default_omega() -> f64 {
    0.1
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Trajectory::Waypoint { target } => {
                if !target.iter().all(|v| v.is_finite()) {
                    return Err("waypoint target must be finite".into());
                }
            }
            Trajectory::Helix { omega } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(format!("helix omega must be positive, got {omega}"));
                }
            }
            Trajectory::Custom { samples } => {
                if samples.is_empty() {
                    return Err("custom trajectory needs at least one sample".into());
                }
                if !samples.iter().flatten().all(|v| v.is_finite()) {
                    return Err("custom trajectory samples must be finite".into());
                }
                if samples.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err("custom trajectory times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }
}

/// A trajectory in the plant frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub trajectory: Trajectory,
    /// Negate the third channel, for commands given with the vertical axis up.
    pub z_up: bool,
}

impl Reference {
    pub fn new(trajectory: Trajectory, z_up: bool) -> Self {
        Self { trajectory, z_up }
    }

    fn raw(&self, t: f64) -> Vector3<f64> {
        match &self.trajectory {
            Trajectory::Waypoint { target } => waypoint_reference(t, &Vector3::from(*target)),
            Trajectory::Helix { omega } => helix_reference(t, *omega),
            Trajectory::Custom { samples } => interpolate(samples, t),
        }
    }
}

impl ReferenceSignal for Reference {
    fn position(&self, t: f64) -> Vector3<f64> {
        let mut r = self.raw(t);
        if self.z_up {
            r[2] = -r[2];
        }
        r
    }
}

fn interpolate(samples: &[[f64; 4]], t: f64) -> Vector3<f64> {
    let at = |s: &[f64; 4]| Vector3::new(s[1], s[2], s[3]);
    let first = &samples[0];
    let last = &samples[samples.len() - 1];
    if t <= first[0] {
        return at(first);
    }
    if t >= last[0] {
        return at(last);
    }
    let k = samples.partition_point(|s| s[0] <= t);
    let (a, b) = (&samples[k - 1], &samples[k]);
    let w = (t - a[0]) / (b[0] - a[0]);
    at(a) * (1.0 - w) + at(b) * w
}
