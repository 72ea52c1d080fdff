//! Strictly proper SISO filters in controllable canonical form, and banks of
//! identical filters driven channel by channel.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::Integrable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("denominator is empty or identically zero")]
    EmptyDenominator,
    #[error("transfer function is not strictly proper (numerator degree {num} >= denominator degree {den})")]
    NotStrictlyProper { num: usize, den: usize },
    #[error("transfer function is not asymptotically stable")]
    Unstable,
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// `num(s) / den(s)` with coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransferFunction", into = "RawTransferFunction")]
pub struct TransferFunction {
    num: Vec<f64>,
    /// Monic.
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TryFrom<RawTransferFunction> for TransferFunction {
    type Error = FilterError;

    fn try_from(raw: RawTransferFunction) -> Result<Self, FilterError> {
        TransferFunction::new(raw.num, raw.den)
    }
}

impl From<TransferFunction> for RawTransferFunction {
    fn from(tf: TransferFunction) -> Self {
        RawTransferFunction { num: tf.num, den: tf.den }
    }
}

fn trim_high_zeros(mut coeffs: Vec<f64>) -> Vec<f64> {
    while coeffs.last() == Some(&0.0) {
        coeffs.pop();
    }
    coeffs
}

/// Routh–Hurwitz test: every root of the polynomial has negative real part.
fn is_hurwitz(ascending: &[f64]) -> bool {
    let n = ascending.len() - 1;
    if n == 0 {
        return true;
    }
    // descending coefficients, leading coefficient positive
    let sign = ascending[n].signum();
    let desc: Vec<f64> = ascending.iter().rev().map(|c| c * sign).collect();
    if desc.iter().any(|&c| c <= 0.0) {
        return false;
    }
    let mut prev: Vec<f64> = desc.iter().step_by(2).copied().collect();
    let mut curr: Vec<f64> = desc.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..n - 1 {
        let pivot = curr[0];
        if pivot <= 0.0 {
            return false;
        }
        let next: Vec<f64> = (0..prev.len().saturating_sub(1))
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = curr.get(j + 1).copied().unwrap_or(0.0);
                (pivot * a - prev[0] * b) / pivot
            })
            .collect();
        prev = curr;
        curr = if next.is_empty() { vec![0.0] } else { next };
    }
    curr[0] > 0.0
}

fn eval_poly(ascending: &[f64], s: Complex<f64>) -> Complex<f64> {
    ascending.iter().rev().fold(Complex::new(0.0, 0.0), |acc, &c| acc * s + c)
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, FilterError> {
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(FilterError::NonFinite);
        }
        let den = trim_high_zeros(den);
        let lead = *den.last().ok_or(FilterError::EmptyDenominator)?;
        let mut num = trim_high_zeros(num);
        if num.is_empty() {
            num.push(0.0);
        }
        let den_degree = den.len() - 1;
        if num.len() > den_degree {
            return Err(FilterError::NotStrictlyProper { num: num.len() - 1, den: den_degree });
        }
        if !is_hurwitz(&den) {
            return Err(FilterError::Unstable);
        }
        Ok(Self {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
        })
    }

    /// `1 / (s + a)`.
    pub fn first_order(pole: f64) -> Result<Self, FilterError> {
        Self::new(vec![1.0], vec![pole, 1.0])
    }

    /// `1 / ((s + a)(s + b))`, expanded as `s² + (a + b) s + a b`.
    pub fn second_order(a: f64, b: f64) -> Result<Self, FilterError> {
        Self::new(vec![1.0], vec![a * b, a + b, 1.0])
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        eval_poly(&self.num, s) / eval_poly(&self.den, s)
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }
}

/// `ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

impl Realization {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// `C (sI − A)⁻¹ B`
    pub fn frequency_response(&self, s: Complex<f64>) -> Complex<f64> {
        let n = self.order();
        let resolvent = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex::new(0.0, 0.0) };
            diag - Complex::new(self.a[(i, j)], 0.0)
        });
        let rhs = self.b.map(|x| Complex::new(x, 0.0));
        let x = resolvent.lu().solve(&rhs).expect("s is not a pole");
        self.c.iter().zip(x.iter()).map(|(c, xi)| xi * *c).sum()
    }
}

/// Controllable canonical form of a strictly proper transfer function.
pub fn realize(tf: &TransferFunction) -> Realization {
    let n = tf.order();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -tf.den[j];
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let c = RowDVector::from_fn(n, |_, j| tf.num.get(j).copied().unwrap_or(0.0));
    Realization { a, b, c }
}

/// Independent copies of one SISO filter, one per input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    realization: Arc<Realization>,
    channels: usize,
    /// Channel-major: `states[ch * order + i]`.
    states: Vec<f64>,
}

impl FilterBank {
    /// A bank at rest.
    pub fn new(realization: Arc<Realization>, channels: usize) -> Self {
        let states = vec![0.0; channels * realization.order()];
        Self { realization, channels, states }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn output(&self, channel: usize) -> f64 {
        let n = self.realization.order();
        let x = &self.states[channel * n..(channel + 1) * n];
        self.realization.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn outputs(&self) -> Vec<f64> {
        (0..self.channels).map(|ch| self.output(ch)).collect()
    }

    /// `ẋ = A x + B u` for every channel.
    pub fn derivative(&self, inputs: &[f64]) -> Result<Vec<f64>, FilterError> {
        if inputs.len() != self.channels {
            return Err(FilterError::ChannelMismatch { expected: self.channels, got: inputs.len() });
        }
        let r = &*self.realization;
        let n = r.order();
        let mut dx = vec![0.0; self.states.len()];
        for (ch, &u) in inputs.iter().enumerate() {
            let x = &self.states[ch * n..(ch + 1) * n];
            for i in 0..n {
                let mut acc = r.b[i] * u;
                for (j, xj) in x.iter().enumerate() {
                    acc += r.a[(i, j)] * xj;
                }
                dx[ch * n + i] = acc;
            }
        }
        Ok(dx)
    }
}

impl Integrable for FilterBank {
    type Derivative = Vec<f64>;

    fn advanced(&self, d: &Vec<f64>, h: f64) -> Self {
        Self {
            realization: Arc::clone(&self.realization),
            channels: self.channels,
            states: self.states.iter().zip(d).map(|(x, dx)| x + dx * h).collect(),
        }
    }
}
