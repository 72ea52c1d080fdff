//! Direct regularized least-squares solve of the retrospective cost over a
//! sampled history. Ground truth for the propagated minimizer.

use nalgebra::{Matrix3, RowVector3, Vector3};

use crate::ct_rcac::RcacHyperparams;

/// Filtered data recorded at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistorySample {
    pub t: f64,
    pub phi_f: RowVector3<f64>,
    pub u_f: f64,
    pub z: f64,
}

fn trapezoid_weights(history: &[HistorySample]) -> Vec<f64> {
    let mut w = vec![0.0; history.len()];
    for (k, pair) in history.windows(2).enumerate() {
        let half = 0.5 * (pair[1].t - pair[0].t);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

fn is_uniform(history: &[HistorySample]) -> bool {
    let Some(h) = history.get(1).map(|s| s.t - history[0].t) else { return false };
    h > 0.0 && history.windows(2).all(|p| ((p[1].t - p[0].t) - h).abs() <= 1e-9 * h)
}

/// Composite Simpson on uniform samples, closing an odd interval count with
/// the 3/8 rule; trapezoid otherwise.
pub fn quadrature_weights(history: &[HistorySample]) -> Vec<f64> {
    let n = history.len().saturating_sub(1);
    if n < 2 || !is_uniform(history) {
        return trapezoid_weights(history);
    }
    let h = (history[n].t - history[0].t) / n as f64;
    let mut w = vec![0.0; n + 1];
    let simpson_end = if n.is_multiple_of(2) { n } else { n - 3 };
    for k in (0..simpson_end).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson_end < n {
        let k = simpson_end;
        for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[k + j] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

/// `argmin_θ Σ_k w_k R_z (z_k + Φ_f,k θ − u_f,k)² + θᵀ R_θ θ` with
/// quadrature weights `w_k`.
pub fn batch_oracle(history: &[HistorySample], hyper: &RcacHyperparams) -> Vector3<f64> {
    let weights = quadrature_weights(history);
    let mut normal = Matrix3::identity() * hyper.r_theta();
    let mut rhs = Vector3::zeros();
    for (s, w) in history.iter().zip(&weights) {
        let phi = s.phi_f.transpose();
        normal += phi * s.phi_f * (w * hyper.rz);
        rhs -= phi * (w * hyper.rz * (s.z - s.u_f));
    }
    normal
        .cholesky()
        .expect("normal matrix is positive definite")
        .solve(&rhs)
}

/// The discretized retrospective cost `J(t, θ̂)` over the history.
pub fn retrospective_cost(
    history: &[HistorySample],
    hyper: &RcacHyperparams,
    theta: &Vector3<f64>,
) -> f64 {
    let weights = quadrature_weights(history);
    let integral: f64 = history
        .iter()
        .zip(&weights)
        .map(|(s, w)| {
            let zhat = s.z + (s.phi_f * theta)[0] - s.u_f;
            w * hyper.rz * zhat * zhat
        })
        .sum();
    integral + hyper.r_theta() * theta.norm_squared()
}
