//! Fixed-step classical Runge–Kutta.

/// A state that can be moved along a derivative.
pub trait Integrable: Clone {
    type Derivative;

    /// Returns `self + h · d`.
    fn advanced(&self, d: &Self::Derivative, h: f64) -> Self;
}

/// One RK4 step of `ẋ = f(t, x)`.
///
/// The weighted sum is applied as four successive updates, so the result is
/// independent of any allocation order and bit-reproducible.
pub fn rk4_step<S, E, F>(mut f: F, t: f64, x: &S, h: f64) -> Result<S, E>
where
    S: Integrable,
    F: FnMut(f64, &S) -> Result<S::Derivative, E>,
{
    let half = 0.5 * h;
    let k1 = f(t, x)?;
    let k2 = f(t + half, &x.advanced(&k1, half))?;
    let k3 = f(t + half, &x.advanced(&k2, half))?;
    let k4 = f(t + h, &x.advanced(&k3, h))?;
    Ok(x
        .advanced(&k1, h / 6.0)
        .advanced(&k2, h / 3.0)
        .advanced(&k3, h / 3.0)
        .advanced(&k4, h / 6.0))
}

impl Integrable for f64 {
    type Derivative = f64;

    fn advanced(&self, d: &f64, h: f64) -> f64 {
        self + d * h
    }
}

impl Integrable for Vec<f64> {
    type Derivative = Vec<f64>;

    fn advanced(&self, d: &Vec<f64>, h: f64) -> Vec<f64> {
        self.iter().zip(d).map(|(x, dx)| x + dx * h).collect()
    }
}
