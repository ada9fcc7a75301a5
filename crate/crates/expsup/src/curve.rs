//! Tabulated one-dimensional curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interp {
    Linear,
    /// Fritsch–Carlson monotone cubic (PCHIP).
    MonotoneCubic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// A function known at strictly increasing abscissae. Evaluation outside the
/// tabulated range clamps to the end values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    rule: Interp,
}

impl TabulatedCurve {
    /// Builds a curve from `(x, y)` pairs in any order.
    pub fn new(mut pts: Vec<(f64, f64)>, rule: Interp) -> Result<Self> {
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        pts.dedup_by(|q, p| q.0 == p.0);
        if pts.is_empty() || pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::DomainError("tabulated curve needs finite points".into()));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let slopes = match rule {
            Interp::Linear => Vec::new(),
            Interp::MonotoneCubic => pchip_slopes(&xs, &ys),
        };
        Ok(TabulatedCurve { xs, ys, slopes, rule })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let j = self.xs.partition_point(|&t| t <= x) - 1;
        let (x0, x1, y0, y1) = (self.xs[j], self.xs[j + 1], self.ys[j], self.ys[j + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        match self.rule {
            Interp::Linear => y0 + t * (y1 - y0),
            Interp::MonotoneCubic => {
                let (d0, d1) = (self.slopes[j], self.slopes[j + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + t) * h * d0
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * h * d1
            }
        }
    }

    /// True when the node values move in `dir`, allowing `tol` of slack.
    pub fn is_monotone(&self, dir: Direction, tol: f64) -> bool {
        self.monotonicity_violation(dir, tol).is_none()
    }

    /// First node where the values move against `dir` by more than `tol`.
    pub fn monotonicity_violation(&self, dir: Direction, tol: f64) -> Option<f64> {
        self.ys.windows(2).zip(self.xs.windows(2)).find_map(|(y, x)| {
            let step = y[1] - y[0];
            let bad = match dir {
                Direction::Increasing => step < -tol,
                Direction::Decreasing => step > tol,
            };
            bad.then_some(x[1])
        })
    }

    /// The curve with the roles of abscissa and ordinate swapped. Requires
    /// strictly monotone values.
    pub fn inverse(&self) -> Result<TabulatedCurve> {
        let inc = self.ys.windows(2).all(|w| w[1] > w[0]);
        let dec = self.ys.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::MonotonicityFailure("curve is not strictly monotone; no inverse".into()));
        }
        TabulatedCurve::new(self.ys.iter().copied().zip(self.xs.iter().copied()).collect(), self.rule)
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0], del[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_cubic_reproduce_lines() {
        let pts: Vec<(f64, f64)> = (0..6).map(|k| (k as f64, 2.0 * k as f64 + 1.0)).collect();
        for rule in [Interp::Linear, Interp::MonotoneCubic] {
            let c = TabulatedCurve::new(pts.clone(), rule).unwrap();
            assert!((c.eval(2.5) - 6.0).abs() < 1e-14);
            assert_eq!(c.eval(-1.0), 1.0);
            assert_eq!(c.eval(9.0), 11.0);
        }
    }

    #[test]
    fn inverse_of_decreasing_curve() {
        let c = TabulatedCurve::new(vec![(1.0, 5.0), (2.0, 3.0), (3.0, 2.0)], Interp::Linear).unwrap();
        assert!(c.is_monotone(Direction::Decreasing, 0.0));
        let inv = c.inverse().unwrap();
        assert!((inv.eval(4.0) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn pchip_stays_monotone() {
        let c = TabulatedCurve::new(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 1.0)], Interp::MonotoneCubic).unwrap();
        let mut prev = -1.0;
        for k in 0..=300 {
            let v = c.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&v));
            prev = v;
        }
    }
}
