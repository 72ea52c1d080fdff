//! Propagated minimizer against the batch oracle on seeded random signals.

use nalgebra::{RowVector3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ct_rcac::{RcacError, RcacHyperparams, RcacState, RegressorSample};
use crate::integrator::rk4_step;
use crate::oracle::{batch_oracle, HistorySample};

/// Sum of three sinusoids per channel with seeded amplitudes, frequencies
/// and phases; bounded by construction.
#[derive(Debug, Clone)]
pub struct RandomSignals {
    /// Per channel (Φ₁, Φ₂, Φ₃, u, z), three `(amplitude, ω, phase)` triples.
    terms: [[(f64, f64, f64); 3]; 5],
}

impl RandomSignals {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = std::array::from_fn(|_| {
            std::array::from_fn(|_| {
                (
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.1..5.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
        });
        Self { terms }
    }

    fn channel(&self, k: usize, t: f64) -> f64 {
        self.terms[k].iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
    }

    pub fn sample(&self, t: f64) -> RegressorSample {
        RegressorSample {
            phi: RowVector3::new(self.channel(0, t), self.channel(1, t), self.channel(2, t)),
            u: self.channel(3, t),
            z: self.channel(4, t),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub row: &'static str,
    pub seed: u64,
    pub max_relative_error: f64,
    /// Largest `‖P − Pᵀ‖` of the propagated matrix.
    pub max_symmetry_error: f64,
    pub min_eigenvalue: f64,
}

fn relative_error(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Integrates one learner for `duration` seconds and compares its gains with
/// the batch solve over the recorded history at `checkpoints` evenly spaced
/// times.
pub fn check_one(
    row: &'static str,
    hyper: &RcacHyperparams,
    seed: u64,
    duration: f64,
    dt: f64,
    checkpoints: usize,
) -> Result<CheckReport, RcacError> {
    let signals = RandomSignals::new(seed);
    let steps = (duration / dt).round() as usize;
    let every = (steps / checkpoints).max(1);
    let mut state = RcacState::new(hyper);
    let record = |t: f64, s: &RcacState| HistorySample {
        t,
        phi_f: s.filtered_regressor(),
        u_f: s.filtered_control(),
        z: signals.sample(t).z,
    };
    let mut history = vec![record(0.0, &state)];
    let mut report = CheckReport {
        row,
        seed,
        max_relative_error: 0.0,
        max_symmetry_error: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        state = rk4_step(|t, s: &RcacState| s.derivative(&signals.sample(t), hyper), t, &state, dt)?;
        let t_next = (k + 1) as f64 * dt;
        history.push(record(t_next, &state));
        report.max_symmetry_error = report.max_symmetry_error.max(state.symmetry_error());
        if (k + 1) % every == 0 {
            let oracle = batch_oracle(&history, hyper);
            report.max_relative_error = report.max_relative_error.max(relative_error(&state.gains(), &oracle));
            report.min_eigenvalue = report.min_eigenvalue.min(state.min_eigenvalue());
        }
    }
    Ok(report)
}

pub const ROWS: [&str; 3] = ["outer_xy", "outer_z", "inner"];

/// Every hyperparameter row against every seed in `seeds`.
pub fn check_all(
    rows: &[RcacHyperparams; 3],
    seeds: std::ops::Range<u64>,
    duration: f64,
    dt: f64,
) -> Result<Vec<CheckReport>, RcacError> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, u64)> = (0..3).flat_map(|r| seeds.clone().map(move |s| (r, s))).collect();
    jobs.par_iter()
        .map(|&(r, seed)| check_one(ROWS[r], &rows[r], seed, duration, dt, 10))
        .collect()
}
