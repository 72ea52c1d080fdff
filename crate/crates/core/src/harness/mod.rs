//! Scenarios, references, gain files, sweeps and the pieces the CLI is built from.

pub mod config;
pub mod gains;
pub mod oracle_check;
pub mod reference;
pub mod sweep;

use std::path::Path;

pub use config::{load_config, ConfigError, Scenario, ScenarioFile};
pub use gains::{GainsDocument, Provenance};
pub use reference::{helix_reference, waypoint_reference, Reference, Trajectory};

use crate::environments::{run, ReferenceSignal, RunFailure, RunOutput};

/// A finished scenario run.
#[derive(Debug, Clone)]
pub struct Execution {
    pub output: RunOutput,
    /// `|r − r_d|` per axis at the final time.
    pub final_error: [f64; 3],
}

pub fn execute(scenario: &Scenario) -> Result<Execution, RunFailure> {
    let output = run(&scenario.sim, &scenario.reference, scenario.duration())?;
    let t = output.final_state.t;
    let err = output.final_state.continuous.body.position - scenario.reference.position(t);
    Ok(Execution { final_error: [err[0].abs(), err[1].abs(), err[2].abs()], output })
}

/// Final gains of a run, tagged with the scenario that produced them.
pub fn learned_gains(scenario: &Scenario, output: &RunOutput) -> GainsDocument {
    GainsDocument::from_array(
        &output.final_gains,
        Provenance {
            scenario_hash: Some(scenario.hash()),
            table: None,
            frozen_at: Some(output.final_state.t),
        },
    )
}

/// Writes `telemetry.csv`.
pub fn write_telemetry(dir: &Path, csv: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("telemetry.csv"), csv)
}
