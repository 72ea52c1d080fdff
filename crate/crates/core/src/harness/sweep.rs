//! Parallel grids over scenario fields.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ConfigError, ScenarioFile};
use super::execute;

/// A base scenario, a grid of dotted field paths to candidate values, and
/// a list of seeds. Every combination is run once per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub base: Value,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub index: usize,
    pub seed: u64,
    pub params: Vec<(String, Value)>,
    pub ok: bool,
    pub message: String,
    /// Time reached (s).
    pub t_end: f64,
    /// `|r − r_d|` per axis at the end of the run.
    pub final_error: [f64; 3],
}

/// Sets `value` at a dotted path, creating objects along the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("sweep path {path}: {key} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Cartesian product of the grid, in key order.
pub fn combinations(grid: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(String, Value)>> {
    grid.iter().fold(vec![vec![]], |acc, (key, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect()
    })
}

/// Grid values, seed and the scenario they produce.
pub type SweepJob = (Vec<(String, Value)>, u64, ScenarioFile);

/// Expands the sweep into scenario files, one per combination and seed.
pub fn expand(sweep: &SweepFile) -> Result<Vec<SweepJob>, ConfigError> {
    let mut out = Vec::new();
    for combo in combinations(&sweep.grid) {
        for &seed in &sweep.seeds {
            let mut v = sweep.base.clone();
            for (k, val) in &combo {
                set_path(&mut v, k, val.clone())?;
            }
            set_path(&mut v, "seed", Value::from(seed))?;
            let file = ScenarioFile::from_value(v, "sweep")?;
            out.push((combo.clone(), seed, file));
        }
    }
    Ok(out)
}

/// Runs every expanded scenario in parallel. Results come back in expansion
/// order regardless of scheduling.
pub fn run_sweep(sweep: &SweepFile) -> Result<Vec<SweepResult>, ConfigError> {
    let jobs = expand(sweep)?;
    let scenarios = jobs
        .into_iter()
        .map(|(params, seed, file)| Ok((params, seed, file.resolve()?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(scenarios
        .par_iter()
        .enumerate()
        .map(|(index, (params, seed, scenario))| {
            let (ok, message, t_end, final_error) = match execute(scenario) {
                Ok(out) => (true, String::new(), scenario.duration(), out.final_error),
                Err(e) => (false, e.to_string(), e.t, [f64::NAN; 3]),
            };
            SweepResult { index, seed: *seed, params: params.clone(), ok, message, t_end, final_error }
        })
        .collect())
}

/// One CSV row per result.
pub fn to_csv(results: &[SweepResult]) -> String {
    let keys: Vec<&str> = results
        .first()
        .map(|r| r.params.iter().map(|(k, _)| k.as_str()).collect())
        .unwrap_or_default();
    let mut out = String::from("index,seed");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push_str(",ok,t_end,err1,err2,err3,message\n");
    for r in results {
        out.push_str(&format!("{},{}", r.index, r.seed));
        for (_, v) in &r.params {
            out.push(',');
            out.push_str(&v.to_string().replace(',', ";"));
        }
        out.push_str(&format!(
            ",{},{},{},{},{},{}\n",
            r.ok,
            r.t_end,
            r.final_error[0],
            r.final_error[1],
            r.final_error[2],
            r.message.replace([',', '\n'], " ")
        ));
    }
    out
}
