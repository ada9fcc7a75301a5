//! Confluent hypergeometric functions.
//!
//! `M(a, b, z)` is summed as its ascending series with compensated
//! accumulation; negative arguments go through Kummer's transformation
//! `M(a, b, z) = e^z M(b−a, b, −z)` first. `U(a, b, z)` uses its Laplace
//! integral, which avoids the cancellation of the two-term `M` connection
//! formula.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadOpts};

/// Default cap on the number of series terms.
pub const MAX_TERMS: usize = 10_000;

/// Parameters of `M(a, b, ·)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KummerParams {
    pub a: f64,
    pub b: f64,
    /// Target relative error.
    pub precision: f64,
}

impl KummerParams {
    pub fn new(a: f64, b: f64) -> Self {
        KummerParams { a, b, precision: 1e-16 }
    }

    fn check(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::ParamError("Kummer parameters must be finite".into()));
        }
        if self.b <= 0.0 && self.b == self.b.round() {
            return Err(Error::ParamError(format!("b = {} is a pole of the series", self.b)));
        }
        Ok(())
    }
}

fn series(a: f64, b: f64, z: f64, precision: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut comp = 0.0;
    let mut term = 1.0;
    let mut small = 0;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * z / ((b + nf) * (nf + 1.0));
        if term == 0.0 {
            return Ok(sum);
        }
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        // Terms only shrink for good once n exceeds |a|, |b| and |z|.
        let settled = nf > a.abs() && nf > b.abs() && nf + 1.0 > z.abs();
        if settled && term.abs() <= precision * sum.abs() {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::SeriesDivergence { a, b, z, terms: MAX_TERMS })
}

/// `M(a, b, z)`, Kummer's confluent hypergeometric function.
pub fn kummer_m(params: KummerParams, z: f64) -> Result<f64> {
    params.check()?;
    if !z.is_finite() {
        return Err(Error::DomainError(format!("argument {z} is not finite")));
    }
    if z < 0.0 {
        let b = params.b;
        return series(b - params.a, b, -z, params.precision).map(|m| z.exp() * m);
    }
    series(params.a, params.b, z, params.precision)
}

/// `dM/dz = (a/b) M(a+1, b+1, z)`.
pub fn kummer_m_derivative(params: KummerParams, z: f64) -> Result<f64> {
    params.check()?;
    if params.a == 0.0 {
        return Ok(0.0);
    }
    let shifted = KummerParams { a: params.a + 1.0, b: params.b + 1.0, precision: params.precision };
    Ok(params.a / params.b * kummer_m(shifted, z)?)
}

/// Tricomi's `U(a, b, z)` for `a > 0`, `z > 0`, from
/// `Γ(a) U(a, b, z) = ∫₀^∞ e^{−zt} t^{a−1} (1+t)^{b−a−1} dt`.
pub fn kummer_u(a: f64, b: f64, z: f64) -> Result<f64> {
    Ok(kummer_u_scaled(a, b, z)? / libm::tgamma(a))
}

/// `Γ(a) U(a, b, z)`; the gamma factor is left out so that callers which only
/// need `U` up to a constant avoid it.
pub fn kummer_u_scaled(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a > 0.0) || !(z > 0.0) || !b.is_finite() {
        return Err(Error::DomainError(format!("U integral needs a > 0, z > 0 (a={a}, z={z})")));
    }
    // t = s^{1/a} removes the t^{a−1} endpoint singularity.
    let p = b - a - 1.0;
    let inv_a = 1.0 / a;
    let f = move |s: f64| {
        if s <= 0.0 {
            return inv_a;
        }
        let t = s.powf(inv_a);
        inv_a * (-z * t + p * t.ln_1p()).exp()
    };
    // The integrand in t peaks near p/z; split there (mapped to s).
    let peak_t = if p > 0.0 { p / z } else { 1.0 / z };
    let peak = peak_t.powf(a);
    let opts = QuadOpts { abs_tol: 0.0, rel_tol: 1e-14, max_intervals: 2000 };
    integrate(f, 0.0, f64::INFINITY, &[peak, 4.0 * peak], &opts)
}
