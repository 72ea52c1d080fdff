//! Continuous-time retrospective cost adaptive control.
//!
//! For one SISO axis with regressor `Φ(t) ∈ ℝ^{1×3}`, applied control `u(t)`
//! and performance `z(t)`, the learner minimizes
//!
//! ```text
//! J(t, θ̂) = ∫₀ᵗ ẑ(τ)ᵀ R_z ẑ(τ) dτ + θ̂ᵀ R_θ θ̂,   ẑ = z + Φ_f θ̂ − u_f
//! ```
//!
//! where `Φ_f = G_f[Φ]` and `u_f = G_f[u]`. Setting the gradient to zero gives
//! `(R_θ + ∫Φ_fᵀR_zΦ_f) θ* = −∫Φ_fᵀR_z(z − u_f)`, which is propagated exactly as
//!
//! ```text
//! Ṗ = −P Φ_fᵀ R_z Φ_f P,   ḃ = −Φ_fᵀ R_z (z − u_f),   θ* = P b,
//! P(0) = R_θ⁻¹,   b(0) = 0.
//! ```
//!
//! The same minimizer is available in information form, propagating
//! `Q = P⁻¹` with `Q̇ = Φ_fᵀ R_z Φ_f` and solving `Q θ* = b`. Both forms are
//! algebraically identical; the information form stays well conditioned when
//! `R_z ∫Φ_f² ≫ R_θ`.

use std::sync::Arc;

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::Integrable;
use crate::lti_filter::{realize, FilterBank, FilterError, TransferFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RcacError {
    #[error("non-finite {0} in regressor sample")]
    NonFiniteSample(&'static str),
    #[error("covariance lost positive definiteness (threshold {threshold:e}); reduce the integration step")]
    NotPositiveDefinite { threshold: f64 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Which matrix the optimizer integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// `P` itself, via the Riccati equation.
    Covariance,
    /// `Q = P⁻¹`, which grows linearly in the data.
    #[default]
    Information,
}

/// Filter, performance weight `R_z` and initial covariance `P(0) = p0 I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcacHyperparams {
    pub filter: TransferFunction,
    pub rz: f64,
    pub p0: f64,
    #[serde(default)]
    pub propagation: Propagation,
}

impl RcacHyperparams {
    pub fn new(filter: TransferFunction, rz: f64, p0: f64) -> Result<Self, RcacError> {
        let h = Self { filter, rz, p0, propagation: Propagation::default() };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), RcacError> {
        if !(self.rz.is_finite() && self.rz > 0.0) {
            return Err(RcacError::InvalidHyperparams(format!("rz must be positive, got {}", self.rz)));
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(RcacError::InvalidHyperparams(format!("p0 must be positive, got {}", self.p0)));
        }
        Ok(())
    }

    /// Horizontal position axes: `1/(s + 0.5)`, `R_z = 10⁴`, `P(0) = 10³`.
    pub fn outer_horizontal() -> Self {
        Self::new(TransferFunction::first_order(0.5).unwrap(), 1e4, 1e3).unwrap()
    }

    /// Vertical position axis: `1/((s + 1.5)(s + 3))`, `R_z = 10⁴`, `P(0) = 10⁵`.
    pub fn outer_vertical() -> Self {
        Self::new(TransferFunction::second_order(1.5, 3.0).unwrap(), 1e4, 1e5).unwrap()
    }

    /// Attitude axes: `1/(s + 2)`, `R_z = 10⁴`, `P(0) = 10³`.
    pub fn inner() -> Self {
        Self::new(TransferFunction::first_order(2.0).unwrap(), 1e4, 1e3).unwrap()
    }

    pub fn with_propagation(mut self, propagation: Propagation) -> Self {
        self.propagation = propagation;
        self
    }

    /// `R_θ = 1 / p0`.
    pub fn r_theta(&self) -> f64 {
        1.0 / self.p0
    }
}

/// Measured data for one axis at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorSample {
    pub phi: RowVector3<f64>,
    pub u: f64,
    pub z: f64,
}

impl RegressorSample {
    pub fn check_finite(&self) -> Result<(), RcacError> {
        if !self.phi.iter().all(|x| x.is_finite()) {
            return Err(RcacError::NonFiniteSample("regressor"));
        }
        if !self.u.is_finite() {
            return Err(RcacError::NonFiniteSample("control"));
        }
        if !self.z.is_finite() {
            return Err(RcacError::NonFiniteSample("performance"));
        }
        Ok(())
    }
}

/// `(Ṗ, ḃ)` for the given filtered regressor and residual `z − u_f`.
///
/// `Ṗ` is formed as the outer product `−R_z w wᵀ` with `w = P Φ_fᵀ`, so it is
/// exactly symmetric whenever `P` is.
pub fn minimizer_rates(
    p: &Matrix3<f64>,
    phi_f: &RowVector3<f64>,
    rz: f64,
    residual: f64,
) -> (Matrix3<f64>, Vector3<f64>) {
    let w = p * phi_f.transpose();
    let dp = -(w * w.transpose()) * rz;
    let db = -phi_f.transpose() * (rz * residual);
    (dp, db)
}

/// `(Q̇, ḃ)` for the information form `Q = P⁻¹`.
pub fn information_rates(phi_f: &RowVector3<f64>, rz: f64, residual: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let phi = phi_f.transpose();
    (phi * phi_f * rz, -phi * (rz * residual))
}

/// Per-axis optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct RcacState {
    /// `P` or `P⁻¹`, depending on `form`.
    pub m: Matrix3<f64>,
    pub b: Vector3<f64>,
    /// Three channels, output `Φ_f`.
    pub phi_bank: FilterBank,
    /// One channel, output `u_f`.
    pub u_bank: FilterBank,
    form: Propagation,
    pd_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcacDerivative {
    pub m: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub phi_bank: Vec<f64>,
    pub u_bank: Vec<f64>,
}

impl RcacState {
    pub fn new(hyper: &RcacHyperparams) -> Self {
        let realization = Arc::new(realize(&hyper.filter));
        let (m, pd_threshold) = match hyper.propagation {
            Propagation::Covariance => (Matrix3::identity() * hyper.p0, 1e-12 * hyper.p0),
            Propagation::Information => (Matrix3::identity() / hyper.p0, 1e-12 / hyper.p0),
        };
        Self {
            m,
            b: Vector3::zeros(),
            phi_bank: FilterBank::new(Arc::clone(&realization), 3),
            u_bank: FilterBank::new(realization, 1),
            form: hyper.propagation,
            pd_threshold,
        }
    }

    /// Starts the minimizer at `θ₀` instead of zero by setting `b(0) = R_θ θ₀`.
    pub fn with_initial_gains(hyper: &RcacHyperparams, theta0: &Vector3<f64>) -> Self {
        let mut s = Self::new(hyper);
        s.b = theta0 * hyper.r_theta();
        s
    }

    pub fn form(&self) -> Propagation {
        self.form
    }

    /// `P`, inverting the information matrix if needed.
    pub fn covariance(&self) -> Matrix3<f64> {
        match self.form {
            Propagation::Covariance => self.m,
            Propagation::Information => {
                let p = self.m.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN));
                0.5 * (p + p.transpose())
            }
        }
    }

    /// `θ* = P b`, ordered `(k_p1, k_p2, k_i)`.
    pub fn gains(&self) -> Vector3<f64> {
        match self.form {
            Propagation::Covariance => self.m * self.b,
            Propagation::Information => match self.m.cholesky() {
                Some(c) => c.solve(&self.b),
                None => Vector3::from_element(f64::NAN),
            },
        }
    }

    pub fn filtered_regressor(&self) -> RowVector3<f64> {
        RowVector3::new(self.phi_bank.output(0), self.phi_bank.output(1), self.phi_bank.output(2))
    }

    pub fn filtered_control(&self) -> f64 {
        self.u_bank.output(0)
    }

    /// `ẑ = z + Φ_f θ̂ − u_f`.
    pub fn retrospective_performance(&self, z: f64, theta_hat: &Vector3<f64>) -> f64 {
        z + (self.filtered_regressor() * theta_hat)[0] - self.filtered_control()
    }

    /// Frobenius norm of `M − Mᵀ` for the propagated matrix.
    pub fn symmetry_error(&self) -> f64 {
        (self.m - self.m.transpose()).norm()
    }

    /// Fails if the smallest eigenvalue of the propagated matrix drops below
    /// `10⁻¹²` of its initial value.
    pub fn check_positive_definite(&self) -> Result<(), RcacError> {
        let shifted = self.m - Matrix3::identity() * self.pd_threshold;
        match shifted.cholesky() {
            Some(_) => Ok(()),
            None => Err(RcacError::NotPositiveDefinite { threshold: self.pd_threshold }),
        }
    }

    /// Smallest eigenvalue of `P`.
    pub fn min_eigenvalue(&self) -> f64 {
        match self.form {
            Propagation::Covariance => self.m.symmetric_eigenvalues().min(),
            Propagation::Information => 1.0 / self.m.symmetric_eigenvalues().max(),
        }
    }

    pub fn derivative(
        &self,
        sample: &RegressorSample,
        hyper: &RcacHyperparams,
    ) -> Result<RcacDerivative, RcacError> {
        sample.check_finite()?;
        self.check_positive_definite()?;
        let phi_f = self.filtered_regressor();
        let residual = sample.z - self.filtered_control();
        let (m, b) = match self.form {
            Propagation::Covariance => minimizer_rates(&self.m, &phi_f, hyper.rz, residual),
            Propagation::Information => information_rates(&phi_f, hyper.rz, residual),
        };
        Ok(RcacDerivative {
            m,
            b,
            phi_bank: self.phi_bank.derivative(sample.phi.as_slice())?,
            u_bank: self.u_bank.derivative(&[sample.u])?,
        })
    }
}

impl Integrable for RcacState {
    type Derivative = RcacDerivative;

    fn advanced(&self, d: &RcacDerivative, h: f64) -> Self {
        Self {
            m: self.m + d.m * h,
            b: self.b + d.b * h,
            phi_bank: self.phi_bank.advanced(&d.phi_bank, h),
            u_bank: self.u_bank.advanced(&d.u_bank, h),
            form: self.form,
            pd_threshold: self.pd_threshold,
        }
    }
}

/// Convenience wrapper matching the free-function form of the update.
pub fn rcac_derivative(
    state: &RcacState,
    sample: &RegressorSample,
    hyper: &RcacHyperparams,
) -> Result<RcacDerivative, RcacError> {
    state.derivative(sample, hyper)
}

pub fn current_gains(state: &RcacState) -> Vector3<f64> {
    state.gains()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::rk4_step;
    use approx::assert_relative_eq;
    use std::convert::Infallible;

    #[test]
    fn default_rows() {
        let xy = RcacHyperparams::outer_horizontal();
        assert_eq!(xy.filter.denominator(), &[0.5, 1.0]);
        assert_eq!((xy.rz, xy.p0), (1e4, 1e3));
        let z = RcacHyperparams::outer_vertical();
        assert_eq!(z.filter.denominator(), &[4.5, 4.5, 1.0]);
        assert_eq!((z.rz, z.p0), (1e4, 1e5));
        let inner = RcacHyperparams::inner();
        assert_eq!(inner.filter.denominator(), &[2.0, 1.0]);
        assert_eq!((inner.rz, inner.p0), (1e4, 1e3));
        assert_eq!(inner.r_theta(), 1e-3);
    }

    #[test]
    fn invalid_hyperparams() {
        let tf = TransferFunction::first_order(1.0).unwrap();
        assert!(RcacHyperparams::new(tf.clone(), 0.0, 1.0).is_err());
        assert!(RcacHyperparams::new(tf, 1.0, -1.0).is_err());
    }

    #[test]
    fn starts_at_zero_gains() {
        for form in [Propagation::Covariance, Propagation::Information] {
            let s = RcacState::new(&RcacHyperparams::inner().with_propagation(form));
            assert_eq!(s.gains(), Vector3::zeros());
            assert_relative_eq!(s.covariance(), Matrix3::identity() * 1e3, max_relative = 1e-15);
        }
    }

    #[test]
    fn initial_gains_are_reproduced() {
        let theta0 = Vector3::new(0.2, -0.4, 1e-3);
        for form in [Propagation::Covariance, Propagation::Information] {
            let s = RcacState::with_initial_gains(&RcacHyperparams::outer_vertical().with_propagation(form), &theta0);
            assert_relative_eq!(s.gains(), theta0, max_relative = 1e-14);
        }
    }

    #[test]
    fn cold_filters_freeze_the_optimizer() {
        let h = RcacHyperparams::outer_horizontal();
        let s = RcacState::new(&h);
        let sample = RegressorSample { phi: RowVector3::new(1.0, 2.0, 3.0), u: 4.0, z: 5.0 };
        let d = s.derivative(&sample, &h).unwrap();
        assert_eq!(d.m, Matrix3::zeros());
        assert_eq!(d.b, Vector3::zeros());
        assert_eq!(d.phi_bank, vec![1.0, 2.0, 3.0]);
        assert_eq!(d.u_bank, vec![4.0]);
    }

    #[test]
    fn non_finite_sample_rejected() {
        let h = RcacHyperparams::inner();
        let s = RcacState::new(&h);
        let sample = RegressorSample { phi: RowVector3::zeros(), u: 0.0, z: f64::NAN };
        assert_eq!(s.derivative(&sample, &h), Err(RcacError::NonFiniteSample("performance")));
    }

    #[test]
    fn loss_of_definiteness_detected() {
        for form in [Propagation::Covariance, Propagation::Information] {
            let h = RcacHyperparams::inner().with_propagation(form);
            let mut s = RcacState::new(&h);
            s.m[(1, 1)] = -1.0;
            let sample = RegressorSample { phi: RowVector3::zeros(), u: 0.0, z: 0.0 };
            assert!(matches!(s.derivative(&sample, &h), Err(RcacError::NotPositiveDefinite { .. })));
        }
    }

    #[test]
    fn scalar_closed_form() {
        // Φ_f ≡ (1, 0, 0), residual ≡ c: the first coordinate decouples into
        // P = 1/(1/p0 + ρt), b = −ρct, θ* = −ρct/(1/p0 + ρt).
        let (p0, rho, c) = (1.0, 1.0, 1.0);
        let phi_f = RowVector3::new(1.0, 0.0, 0.0);
        let mut x = vec![p0, 0.0];
        let dt = 1e-3;
        for i in 0..1000 {
            x = rk4_step(
                |_, x: &Vec<f64>| {
                    let p = Matrix3::from_diagonal(&Vector3::new(x[0], p0, p0));
                    let (dp, db) = minimizer_rates(&p, &phi_f, rho, c);
                    Ok::<_, Infallible>(vec![dp[(0, 0)], db[0]])
                },
                i as f64 * dt,
                &x,
                dt,
            )
            .unwrap();
        }
        let t = 1.0;
        assert!((x[0] - 1.0 / (1.0 / p0 + rho * t)).abs() < 1e-6);
        assert!((x[1] + rho * c * t).abs() < 1e-6);
        assert_relative_eq!(x[0] * x[1], -0.5, epsilon = 1e-6);
    }

    #[test]
    fn rates_are_symmetric_and_negative_semidefinite() {
        let p = Matrix3::new(3.0, 0.5, 0.1, 0.5, 2.0, -0.2, 0.1, -0.2, 1.0);
        let (dp, _) = minimizer_rates(&p, &RowVector3::new(0.3, -1.2, 0.7), 1e4, 0.5);
        assert_eq!(dp, dp.transpose());
        assert!(dp.symmetric_eigenvalues().max() <= 1e-9);
    }

    #[test]
    fn retrospective_performance_definition() {
        let h = RcacHyperparams::inner();
        let mut s = RcacState::new(&h);
        s.phi_bank = s.phi_bank.advanced(&vec![1.0, 2.0, 3.0], 1.0);
        s.u_bank = s.u_bank.advanced(&vec![0.5], 1.0);
        let zhat = s.retrospective_performance(0.25, &Vector3::new(1.0, 1.0, 1.0));
        assert_relative_eq!(zhat, 0.25 + 6.0 - 0.5);
    }

    #[test]
    fn forms_agree_on_a_common_signal() {
        let run = |form| {
            let h = RcacHyperparams::outer_horizontal().with_propagation(form);
            let mut s = RcacState::new(&h);
            let dt = 1e-3;
            for i in 0..2000 {
                s = rk4_step(
                    |t, s: &RcacState| {
                        let sample = RegressorSample {
                            phi: RowVector3::new(t.sin(), (3.0 * t).cos(), 0.2 * t),
                            u: 0.1 * (2.0 * t).sin(),
                            z: (0.7 * t).cos(),
                        };
                        s.derivative(&sample, &h)
                    },
                    i as f64 * dt,
                    &s,
                    dt,
                )
                .unwrap();
            }
            s
        };
        let cov = run(Propagation::Covariance);
        let info = run(Propagation::Information);
        assert_relative_eq!(cov.gains(), info.gains(), max_relative = 1e-6);
        assert_relative_eq!(cov.covariance(), info.covariance(), max_relative = 1e-6);
    }
}
