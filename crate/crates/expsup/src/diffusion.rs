//! Diffusion specifications and the scale/speed machinery.
//!
//! A [`DiffusionSpec`] describes `dX = μ(X)dt + σ(X)dW` on `(a, b)` killed at
//! rate `r`. [`ScaleSpeed`] provides the scale density
//! `S'(x) = exp(−∫ 2μ/σ²)` and the speed density `m'(x) = 2/(σ²(x) S'(x))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadOpts, UnitMap};

/// A shareable real function.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Boundary behaviour, as declared by the user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Natural,
    Entrance,
    Exit,
    RegularKilled,
    RegularReflected,
}

/// Parametric family a spec was built from, when known. The Monte Carlo
/// engine uses it to pick an exact scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Gbm { mu: f64, sigma: f64 },
    Logistic { mu: f64, gamma: f64, sigma: f64 },
    BrownianDrift { mu: f64, sigma: f64 },
    Custom,
}

/// A time-homogeneous linear diffusion with exponential discounting.
#[derive(Clone)]
pub struct DiffusionSpec {
    mu: RealFn,
    sigma: RealFn,
    a: f64,
    b: f64,
    boundary_a: Boundary,
    boundary_b: Boundary,
    r: f64,
    family: Family,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("interval", &(self.a, self.b))
            .field("boundaries", &(self.boundary_a, self.boundary_b))
            .field("r", &self.r)
            .field("family", &self.family)
            .finish()
    }
}

impl DiffusionSpec {
    pub fn new(
        mu: RealFn,
        sigma: RealFn,
        interval: (f64, f64),
        boundaries: (Boundary, Boundary),
        r: f64,
    ) -> Result<Self> {
        let (a, b) = interval;
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::ParamError(format!("interval ({a}, {b}) is empty")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::ParamError(format!("discount rate must be positive, got {r}")));
        }
        Ok(DiffusionSpec {
            mu,
            sigma,
            a,
            b,
            boundary_a: boundaries.0,
            boundary_b: boundaries.1,
            r,
            family: Family::Custom,
        })
    }

    /// Geometric Brownian motion `dX = μX dt + σX dW` on `(0, ∞)`.
    pub fn gbm(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::ParamError("sigma must be positive".into()));
        }
        let mut s = DiffusionSpec::new(
            Arc::new(move |x| mu * x),
            Arc::new(move |x| sigma * x),
            (0.0, f64::INFINITY),
            (Boundary::Natural, Boundary::Natural),
            r,
        )?;
        s.family = Family::Gbm { mu, sigma };
        Ok(s)
    }

    /// Logistic diffusion `dX = μX(1−γX) dt + σX dW` on `(0, ∞)`.
    pub fn logistic(mu: f64, gamma: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0) || gamma < 0.0 {
            return Err(Error::ParamError("need sigma > 0 and gamma >= 0".into()));
        }
        let mut s = DiffusionSpec::new(
            Arc::new(move |x| mu * x * (1.0 - gamma * x)),
            Arc::new(move |x| sigma * x),
            (0.0, f64::INFINITY),
            (Boundary::Natural, Boundary::Natural),
            r,
        )?;
        s.family = Family::Logistic { mu, gamma, sigma };
        Ok(s)
    }

    /// Brownian motion with constant drift on the real line.
    pub fn brownian(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::ParamError("sigma must be positive".into()));
        }
        let mut s = DiffusionSpec::new(
            Arc::new(move |_| mu),
            Arc::new(move |_| sigma),
            (f64::NEG_INFINITY, f64::INFINITY),
            (Boundary::Natural, Boundary::Natural),
            r,
        )?;
        s.family = Family::BrownianDrift { mu, sigma };
        Ok(s)
    }

    pub fn mu(&self, x: f64) -> f64 {
        (self.mu)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn boundaries(&self) -> (Boundary, Boundary) {
        (self.boundary_a, self.boundary_b)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// `½σ²u'' + μu' − ru` at `x`.
    pub fn killed_generator(&self, x: f64, u: f64, du: f64, d2u: f64) -> f64 {
        let s = self.sigma(x);
        0.5 * s * s * d2u + self.mu(x) * du - self.r * u
    }

    /// Second derivative of any solution of `𝒢_r u = 0`, from the equation itself.
    pub fn harmonic_second_derivative(&self, x: f64, u: f64, du: f64) -> f64 {
        let s = self.sigma(x);
        2.0 * (self.r * u - self.mu(x) * du) / (s * s)
    }

    /// A reasonable interior reference point.
    pub fn reference_point(&self) -> f64 {
        match (self.a.is_finite(), self.b.is_finite()) {
            (true, true) => 0.5 * (self.a + self.b),
            (true, false) => self.a + 1.0,
            (false, true) => self.b - 1.0,
            (false, false) => 0.0,
        }
    }

    /// Unit-interval map centred on `anchor`.
    pub fn unit_map(&self, anchor: f64) -> UnitMap {
        UnitMap::new(self.a, self.b, anchor)
    }
}

enum ScaleInner {
    Closed { s_prime: RealFn, sigma: RealFn },
    Cached(ScaleCache),
}

/// Scale and speed densities of a diffusion.
#[derive(Clone)]
pub struct ScaleSpeed {
    inner: Arc<ScaleInner>,
    anchor: f64,
}

impl fmt::Debug for ScaleSpeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match *self.inner {
            ScaleInner::Closed { .. } => "closed",
            ScaleInner::Cached(_) => "quadrature",
        };
        f.debug_struct("ScaleSpeed").field("kind", &kind).field("anchor", &self.anchor).finish()
    }
}

impl ScaleSpeed {
    /// Wraps a closed-form scale density. `sigma` is needed for `m'`.
    pub fn closed(s_prime: RealFn, sigma: RealFn, anchor: f64) -> Self {
        ScaleSpeed { inner: Arc::new(ScaleInner::Closed { s_prime, sigma }), anchor }
    }

    pub fn s_prime(&self, x: f64) -> f64 {
        match &*self.inner {
            ScaleInner::Closed { s_prime, .. } => s_prime(x),
            ScaleInner::Cached(c) => c.log_s(x).exp(),
        }
    }

    pub fn m_prime(&self, x: f64) -> f64 {
        let s = match &*self.inner {
            ScaleInner::Closed { sigma, .. } => sigma(x),
            ScaleInner::Cached(c) => (c.spec.sigma)(x),
        };
        2.0 / (s * s * self.s_prime(x))
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }
}

/// `log S'` at fixed nodes; values between nodes come from a short
/// quadrature starting at the nearest node. Built eagerly, read-only after.
struct ScaleCache {
    spec: DiffusionSpec,
    nodes: Vec<f64>,
    logs: Vec<f64>,
    opts: QuadOpts,
}

impl ScaleCache {
    fn integrand(spec: &DiffusionSpec) -> impl Fn(f64) -> f64 + '_ {
        move |x| {
            let s = spec.sigma(x);
            2.0 * spec.mu(x) / (s * s)
        }
    }

    fn build(spec: &DiffusionSpec, anchor: f64) -> Result<Self> {
        let opts = QuadOpts { abs_tol: 1e-12, rel_tol: 1e-13, max_intervals: 2000 };
        let map = spec.unit_map(anchor);
        let n = 256;
        let mut nodes: Vec<f64> = (1..n).map(|k| map.from_unit(k as f64 / n as f64)).collect();
        nodes.push(anchor);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let ia = nodes.iter().position(|&x| x == anchor).expect("anchor was inserted");
        let f = Self::integrand(spec);
        let mut logs = vec![0.0; nodes.len()];
        for k in (0..ia).rev() {
            logs[k] = logs[k + 1] + integrate(&f, nodes[k], nodes[k + 1], &[], &opts)?;
        }
        for k in ia + 1..nodes.len() {
            logs[k] = logs[k - 1] - integrate(&f, nodes[k - 1], nodes[k], &[], &opts)?;
        }
        Ok(ScaleCache { spec: spec.clone(), nodes, logs, opts })
    }

    fn log_s(&self, x: f64) -> f64 {
        let j = self.nodes.partition_point(|&t| t < x);
        let k = if j == 0 {
            0
        } else if j == self.nodes.len() || x - self.nodes[j - 1] < self.nodes[j] - x {
            j - 1
        } else {
            j
        };
        let f = Self::integrand(&self.spec);
        match integrate(f, self.nodes[k], x, &[], &self.opts) {
            Ok(v) => self.logs[k] - v,
            Err(_) => f64::NAN,
        }
    }
}

/// Builds the scale and speed densities of `spec` by quadrature of `2μ/σ²`
/// from `anchor`, so that `S'(anchor) = 1`.
pub fn scale_density(spec: &DiffusionSpec, anchor: f64) -> Result<ScaleSpeed> {
    if !spec.contains(anchor) {
        return Err(Error::DomainError(format!("anchor {anchor} outside {:?}", spec.interval())));
    }
    let cache = ScaleCache::build(spec, anchor)?;
    Ok(ScaleSpeed { inner: Arc::new(ScaleInner::Cached(cache)), anchor })
}

/// A single finding of [`validate_spec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub issue: String,
}

/// Result of checking a spec on a grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `σ > 0` and finiteness of `μ`, `σ` at every grid point.
pub fn validate_spec(spec: &DiffusionSpec, grid: &[f64]) -> ValidationReport {
    let mut report = ValidationReport::default();
    for &x in grid {
        report.checked += 1;
        if !spec.contains(x) {
            report.violations.push(Violation { x, issue: "outside the state interval".into() });
            continue;
        }
        let (m, s) = (spec.mu(x), spec.sigma(x));
        if !m.is_finite() {
            report.violations.push(Violation { x, issue: format!("non-finite drift {m}") });
        }
        if !s.is_finite() {
            report.violations.push(Violation { x, issue: format!("non-finite volatility {s}") });
        } else if s <= 0.0 {
            report.violations.push(Violation { x, issue: format!("volatility {s} is not positive") });
        }
    }
    report
}
