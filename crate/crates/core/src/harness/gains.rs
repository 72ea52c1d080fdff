//! Gains import and export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autopilot::AxisGains;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterGains {
    pub r1: AxisGains,
    pub r2: AxisGains,
    pub r3: AxisGains,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerGains {
    pub roll: AxisGains,
    pub pitch: AxisGains,
    pub yaw: AxisGains,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Provenance {
    /// SHA-256 of the resolved scenario that produced the gains.
    pub scenario_hash: Option<String>,
    /// Name of a published gain set these values were transcribed from.
    pub table: Option<String>,
    /// Simulation time at which the gains were frozen (s).
    pub frozen_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDocument {
    pub outer: OuterGains,
    pub inner: InnerGains,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum GainsError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing gains at {path}: {source}")]
    Parse { path: String, source: serde_path_to_error::Error<serde_json::Error> },
    #[error("gains must be finite")]
    NonFinite,
}

const TABLE2_WAYPOINT: &str = include_str!("../../fixtures/table2_waypoint.json");
const TABLE2_HELIX: &str = include_str!("../../fixtures/table2_helix.json");

impl GainsDocument {
    pub fn from_array(gains: &[AxisGains; 6], provenance: Provenance) -> Self {
        Self {
            outer: OuterGains { r1: gains[0], r2: gains[1], r3: gains[2] },
            inner: InnerGains { roll: gains[3], pitch: gains[4], yaw: gains[5] },
            provenance,
        }
    }

    /// State order: r1, r2, r3, roll, pitch, yaw.
    pub fn to_array(&self) -> [AxisGains; 6] {
        [self.outer.r1, self.outer.r2, self.outer.r3, self.inner.roll, self.inner.pitch, self.inner.yaw]
    }

    pub fn validate(&self) -> Result<(), GainsError> {
        if self.to_array().iter().all(|g| g.is_finite()) {
            Ok(())
        } else {
            Err(GainsError::NonFinite)
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, GainsError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: Self = serde_path_to_error::deserialize(de)
            .map_err(|source| GainsError::Parse { path: origin.to_string(), source })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains serialize")
    }

    /// Bundled gain sets by file name: `table2_waypoint.json`, `table2_helix.json`.
    pub fn builtin(name: &str) -> Option<Self> {
        let stem = name.strip_suffix(".json").unwrap_or(name);
        let text = match stem {
            "table2_waypoint" => TABLE2_WAYPOINT,
            "table2_helix" => TABLE2_HELIX,
            _ => return None,
        };
        Some(Self::from_json(text, name).expect("bundled gains are valid"))
    }

    /// Reads `path`, falling back to a bundled set when no such file exists.
    pub fn load(path: &Path) -> Result<Self, GainsError> {
        if !path.exists() {
            if let Some(doc) = path.file_name().and_then(|n| n.to_str()).and_then(Self::builtin) {
                return Ok(doc);
            }
        }
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| GainsError::Io { path: display.clone(), source })?;
        Self::from_json(&text, &display)
    }

    pub fn save(&self, path: &Path) -> Result<(), GainsError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| GainsError::Io { path: path.display().to_string(), source })
    }
}
