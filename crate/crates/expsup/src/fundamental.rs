//! The increasing and decreasing fundamental solutions `ψ`, `φ` of
//! `½σ²u'' + μu' − ru = 0`, their Wronskian and the two-point killed
//! combinations `ψ̂_z`, `φ̂_y`.

use std::fmt;
use std::sync::Arc;

use ode_solvers::continuous_output_model::ContinuousOutputModel;
use ode_solvers::{Dopri5, OutputType, System, Vector2};
use serde::{Deserialize, Serialize};

use crate::diffusion::{scale_density, Boundary, DiffusionSpec, ScaleSpeed};
use crate::error::{Error, Result};
use crate::special::{kummer_m, kummer_m_derivative, kummer_u_scaled, KummerParams};

/// The four functions making up a fundamental pair.
pub trait Basis: Send + Sync {
    fn psi(&self, x: f64) -> f64;
    fn psi_prime(&self, x: f64) -> f64;
    fn phi(&self, x: f64) -> f64;
    fn phi_prime(&self, x: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSource {
    AnalyticGbm,
    AnalyticLogistic,
    UserSupplied,
    NumericOde,
}

/// `ψ`, `φ`, their derivatives and `S'`, all at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPoint {
    pub x: f64,
    pub psi: f64,
    pub phi: f64,
    pub dpsi: f64,
    pub dphi: f64,
    pub sp: f64,
}

/// The minimal `r`-excessive pair together with the scale density it was
/// built against and the Wronskian constant `B = (ψ'φ − φ'ψ)/S'`.
#[derive(Clone)]
pub struct FundamentalPair {
    basis: Arc<dyn Basis>,
    scale: ScaleSpeed,
    b: f64,
    source: PairSource,
    kappa: Option<(f64, f64)>,
}

impl fmt::Debug for FundamentalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FundamentalPair")
            .field("source", &self.source)
            .field("wronskian", &self.b)
            .field("kappa", &self.kappa)
            .finish()
    }
}

impl FundamentalPair {
    /// Wraps a user supplied basis; `B` is taken at `x_ref`.
    pub fn user_supplied(basis: Arc<dyn Basis>, scale: ScaleSpeed, x_ref: f64) -> Result<Self> {
        Self::assemble(basis, scale, x_ref, PairSource::UserSupplied, None)
    }

    fn assemble(
        basis: Arc<dyn Basis>,
        scale: ScaleSpeed,
        x_ref: f64,
        source: PairSource,
        kappa: Option<(f64, f64)>,
    ) -> Result<Self> {
        let b = (basis.psi_prime(x_ref) * basis.phi(x_ref) - basis.phi_prime(x_ref) * basis.psi(x_ref))
            / scale.s_prime(x_ref);
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::ParamError(format!("Wronskian {b} at {x_ref} is not positive")));
        }
        Ok(FundamentalPair { basis, scale, b, source, kappa })
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.basis.psi(x)
    }
    pub fn phi(&self, x: f64) -> f64 {
        self.basis.phi(x)
    }
    pub fn psi_prime(&self, x: f64) -> f64 {
        self.basis.psi_prime(x)
    }
    pub fn phi_prime(&self, x: f64) -> f64 {
        self.basis.phi_prime(x)
    }
    pub fn s_prime(&self, x: f64) -> f64 {
        self.scale.s_prime(x)
    }
    pub fn m_prime(&self, x: f64) -> f64 {
        self.scale.m_prime(x)
    }
    pub fn scale(&self) -> &ScaleSpeed {
        &self.scale
    }
    pub fn source(&self) -> PairSource {
        self.source
    }
    /// The Wronskian constant `B`.
    pub fn wronskian(&self) -> f64 {
        self.b
    }
    /// `(ψ'φ − φ'ψ)/S'` evaluated at `x`; constant for a valid pair.
    pub fn wronskian_at(&self, x: f64) -> f64 {
        let p = self.point(x);
        (p.dpsi * p.phi - p.dphi * p.psi) / p.sp
    }
    /// Roots `(κ₊, κ₋)` of the indicial equation, for power-type pairs.
    pub fn kappa(&self) -> Option<(f64, f64)> {
        self.kappa
    }

    pub fn point(&self, x: f64) -> PairPoint {
        PairPoint {
            x,
            psi: self.psi(x),
            phi: self.phi(x),
            dpsi: self.psi_prime(x),
            dphi: self.phi_prime(x),
            sp: self.s_prime(x),
        }
    }

    /// `ψ̂_z(x) = ψ(x)φ(z) − ψ(z)φ(x)`.
    pub fn psi_hat(&self, z: f64, x: f64) -> f64 {
        self.psi(x) * self.phi(z) - self.psi(z) * self.phi(x)
    }
    pub fn psi_hat_prime(&self, z: f64, x: f64) -> f64 {
        self.psi_prime(x) * self.phi(z) - self.psi(z) * self.phi_prime(x)
    }
    /// `φ̂_y(x) = φ(x)ψ(y) − φ(y)ψ(x)`.
    pub fn phi_hat(&self, y: f64, x: f64) -> f64 {
        self.phi(x) * self.psi(y) - self.phi(y) * self.psi(x)
    }
    pub fn phi_hat_prime(&self, y: f64, x: f64) -> f64 {
        self.phi_prime(x) * self.psi(y) - self.phi(y) * self.psi_prime(x)
    }
}

/// Killed solutions as a standalone view of a pair.
#[derive(Clone, Debug)]
pub struct KilledSolutions {
    pair: FundamentalPair,
}

impl KilledSolutions {
    pub fn psi_hat(&self, z: f64, x: f64) -> f64 {
        self.pair.psi_hat(z, x)
    }
    pub fn psi_hat_prime(&self, z: f64, x: f64) -> f64 {
        self.pair.psi_hat_prime(z, x)
    }
    pub fn phi_hat(&self, y: f64, x: f64) -> f64 {
        self.pair.phi_hat(y, x)
    }
    pub fn phi_hat_prime(&self, y: f64, x: f64) -> f64 {
        self.pair.phi_hat_prime(y, x)
    }
}

pub fn killed_solutions(pair: &FundamentalPair) -> KilledSolutions {
    KilledSolutions { pair: pair.clone() }
}

/// Roots of `½σ²κ(κ−1) + μκ − r = 0`.
pub fn gbm_exponents(mu: f64, sigma: f64, r: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let h = 0.5 - mu / s2;
    let d = (h * h + 2.0 * r / s2).sqrt();
    (h + d, h - d)
}

struct PowerBasis {
    kp: f64,
    km: f64,
}

impl Basis for PowerBasis {
    fn psi(&self, x: f64) -> f64 {
        x.powf(self.kp)
    }
    fn psi_prime(&self, x: f64) -> f64 {
        self.kp * x.powf(self.kp - 1.0)
    }
    fn phi(&self, x: f64) -> f64 {
        x.powf(self.km)
    }
    fn phi_prime(&self, x: f64) -> f64 {
        self.km * x.powf(self.km - 1.0)
    }
}

fn power_scale(mu: f64, sigma: f64) -> ScaleSpeed {
    let e = -2.0 * mu / (sigma * sigma);
    ScaleSpeed::closed(Arc::new(move |x: f64| x.powf(e)), Arc::new(move |x| sigma * x), 1.0)
}

/// `ψ(x) = x^{κ₊}`, `φ(x) = x^{κ₋}` for geometric Brownian motion.
pub fn make_gbm_pair(mu: f64, sigma: f64, r: f64) -> Result<FundamentalPair> {
    if !(r > 0.0) || !(sigma > 0.0) {
        return Err(Error::ParamError("need r > 0 and sigma > 0".into()));
    }
    if mu >= r {
        return Err(Error::ParamError(format!("drift {mu} must be below the discount rate {r}")));
    }
    let (kp, km) = gbm_exponents(mu, sigma, r);
    let basis = Arc::new(PowerBasis { kp, km });
    FundamentalPair::assemble(basis, power_scale(mu, sigma), 1.0, PairSource::AnalyticGbm, Some((kp, km)))
}

struct LogisticBasis {
    kp: f64,
    k: f64,
    m: KummerParams,
    bp: f64,
    phi_norm: f64,
}

impl LogisticBasis {
    fn u(&self, a: f64, b: f64, z: f64) -> f64 {
        kummer_u_scaled(a, b, z).unwrap_or(f64::NAN)
    }
}

impl Basis for LogisticBasis {
    fn psi(&self, x: f64) -> f64 {
        x.powf(self.kp) * kummer_m(self.m, self.k * x).unwrap_or(f64::NAN)
    }
    fn psi_prime(&self, x: f64) -> f64 {
        let z = self.k * x;
        let m = kummer_m(self.m, z).unwrap_or(f64::NAN);
        let dm = kummer_m_derivative(self.m, z).unwrap_or(f64::NAN);
        x.powf(self.kp - 1.0) * (self.kp * m + z * dm)
    }
    fn phi(&self, x: f64) -> f64 {
        self.phi_norm * x.powf(self.kp) * self.u(self.kp, self.bp, self.k * x)
    }
    fn phi_prime(&self, x: f64) -> f64 {
        let z = self.k * x;
        let u = self.u(self.kp, self.bp, z);
        let du = -self.u(self.kp + 1.0, self.bp + 1.0, z);
        self.phi_norm * x.powf(self.kp - 1.0) * (self.kp * u + z * du)
    }
}

/// Fundamental pair of the logistic diffusion `dX = μX(1−γX)dt + σX dW`.
///
/// `ψ(x) = x^{κ₊} M(κ₊, 1+κ₊−κ₋, kx)` with `k = 2μγ/σ²`. The decreasing
/// solution is the one that stays bounded relative to `ψ` as `x → ∞`,
/// `φ(x) ∝ x^{κ₊} U(κ₊, 1+κ₊−κ₋, kx)`, normalised to `φ(1) = 1`.
pub fn make_logistic_pair(mu: f64, gamma: f64, sigma: f64, r: f64) -> Result<FundamentalPair> {
    if !(mu > 0.0) || gamma < 0.0 || !(sigma > 0.0) || !(r > 0.0) {
        return Err(Error::ParamError("need mu, sigma, r > 0 and gamma >= 0".into()));
    }
    let (kp, km) = gbm_exponents(mu, sigma, r);
    let s2 = sigma * sigma;
    if gamma == 0.0 {
        let basis = Arc::new(PowerBasis { kp, km });
        return FundamentalPair::assemble(basis, power_scale(mu, sigma), 1.0, PairSource::AnalyticLogistic, Some((kp, km)));
    }
    let k = 2.0 * mu * gamma / s2;
    let bp = 1.0 + kp - km;
    let m = KummerParams::new(kp, bp);
    if bp <= 0.0 && bp == bp.round() {
        return Err(Error::ParamError(format!("second Kummer parameter {bp} is a non-positive integer")));
    }
    let mut basis = LogisticBasis { kp, k, m, bp, phi_norm: 1.0 };
    kummer_m(m, k)?;
    let u1 = kummer_u_scaled(kp, bp, k)?;
    basis.phi_norm = 1.0 / u1;
    let e = -2.0 * mu / s2;
    let scale = ScaleSpeed::closed(
        Arc::new(move |x: f64| x.powf(e) * (k * (x - 1.0)).exp()),
        Arc::new(move |x| sigma * x),
        1.0,
    );
    FundamentalPair::assemble(Arc::new(basis), scale, 1.0, PairSource::AnalyticLogistic, Some((kp, km)))
}

/// Settings for [`make_numeric_pair`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    /// Left end of the integration range (start of `ψ`).
    pub lo: f64,
    /// Right end of the integration range (start of `φ`).
    pub hi: f64,
    /// Normalisation point: `ψ(x_ref) = φ(x_ref) = 1`.
    pub x_ref: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl OdeConfig {
    /// Truncation at 0.5% / 99.5% of the unit coordinate around `x_ref`,
    /// pulled inwards where `|ln S'|` would exceed 300.
    pub fn for_spec(spec: &DiffusionSpec, x_ref: f64) -> Self {
        let map = spec.unit_map(x_ref);
        let t_ref = map.to_unit(x_ref);
        let tame = |t: f64| match scale_density(spec, x_ref) {
            Ok(ss) => ss.s_prime(map.from_unit(t)).ln().abs() <= 300.0,
            Err(_) => true,
        };
        let end = |t_end: f64| {
            if tame(t_end) {
                return t_end;
            }
            let (mut good, mut bad) = (t_ref, t_end);
            for _ in 0..40 {
                let mid = 0.5 * (good + bad);
                if tame(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            good
        };
        let (lo, hi) = (map.from_unit(end(0.005)), map.from_unit(end(0.995)));
        OdeConfig { lo, hi, x_ref, rtol: 1e-12, atol: 1e-300 }
    }
}

/// `(u, v)` with `v = u'/S'`: `u' = S'v`, `v' = r m' u`, in the time
/// `t ≥ 0` elapsed from `origin` (forwards, or backwards when `reversed`).
/// The dense output of `ode_solvers` stores `|t|` as breakpoints, so `t`
/// must never go negative.
struct ScaleForm {
    scale: ScaleSpeed,
    r: f64,
    origin: f64,
    reversed: bool,
}

impl System<f64, Vector2<f64>> for ScaleForm {
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let (x, sign) = if self.reversed { (self.origin - t, -1.0) } else { (self.origin + t, 1.0) };
        dy[0] = sign * self.scale.s_prime(x) * y[1];
        dy[1] = sign * self.r * self.scale.m_prime(x) * y[0];
    }
}

struct NumericBasis {
    scale: ScaleSpeed,
    psi: ContinuousOutputModel<f64, Vector2<f64>>,
    phi: ContinuousOutputModel<f64, Vector2<f64>>,
    psi_norm: f64,
    phi_norm: f64,
    lo: f64,
    hi: f64,
}

impl NumericBasis {
    fn eval(&self, up: bool, x: f64) -> Option<Vector2<f64>> {
        if up {
            self.psi.evaluate(x - self.lo).map(|v| v * self.psi_norm)
        } else {
            self.phi.evaluate(self.hi - x).map(|v| v * self.phi_norm)
        }
    }
}

impl Basis for NumericBasis {
    fn psi(&self, x: f64) -> f64 {
        self.eval(true, x).map_or(f64::NAN, |v| v[0])
    }
    fn psi_prime(&self, x: f64) -> f64 {
        self.eval(true, x).map_or(f64::NAN, |v| v[1] * self.scale.s_prime(x))
    }
    fn phi(&self, x: f64) -> f64 {
        self.eval(false, x).map_or(f64::NAN, |v| v[0])
    }
    fn phi_prime(&self, x: f64) -> f64 {
        self.eval(false, x).map_or(f64::NAN, |v| v[1] * self.scale.s_prime(x))
    }
}

/// Local exponential growth rates `λ±` from `½σ²λ² + μλ − r = 0`.
fn local_rates(spec: &DiffusionSpec, x: f64) -> (f64, f64) {
    let s2 = spec.sigma(x).powi(2);
    let mu = spec.mu(x);
    let d = (mu * mu + 2.0 * s2 * spec.r()).sqrt();
    ((-mu + d) / s2, (-mu - d) / s2)
}

fn integrate_branch(
    scale: &ScaleSpeed,
    r: f64,
    reversed: bool,
    y0: Vector2<f64>,
    cfg: &OdeConfig,
) -> Result<ContinuousOutputModel<f64, Vector2<f64>>> {
    let origin = if reversed { cfg.hi } else { cfg.lo };
    let len = cfg.hi - cfg.lo;
    let system = ScaleForm { scale: scale.clone(), r, origin, reversed };
    // Dopri's stiffness heuristic measures u and u'/S' in one norm; with S'
    // spanning hundreds of decades it fires on non-stiff problems, so it is off.
    let mut solver = Dopri5::from_param(
        system,
        0.0,
        len,
        len / 100.0,
        y0,
        cfg.rtol,
        cfg.atol,
        0.9,
        0.04,
        0.2,
        10.0,
        len,
        0.0,
        100_000,
        u32::MAX,
        OutputType::Dense,
    );
    let mut model = ContinuousOutputModel::default();
    solver
        .integrate_with_continuous_output_model(&mut model)
        .map_err(|e| Error::OdeFailure(e.to_string()))?;
    Ok(model)
}

/// Builds `ψ`, `φ` by integrating the equation in scale form: `ψ` forward
/// from `cfg.lo`, `φ` backward from `cfg.hi`, each started on the local
/// exponential solution and then normalised at `cfg.x_ref`. The pair is only
/// defined on `[cfg.lo, cfg.hi]`; outside it evaluates to NaN.
pub fn make_numeric_pair(spec: &DiffusionSpec, cfg: &OdeConfig) -> Result<FundamentalPair> {
    let (ba, bb) = spec.boundaries();
    if ba == Boundary::RegularReflected || bb == Boundary::RegularReflected {
        return Err(Error::NotSupported("reflecting boundaries in the numeric pair".into()));
    }
    if !(spec.contains(cfg.lo) && spec.contains(cfg.hi) && cfg.lo < cfg.x_ref && cfg.x_ref < cfg.hi) {
        return Err(Error::DomainError(format!(
            "need a < lo < x_ref < hi < b, got lo={}, x_ref={}, hi={}",
            cfg.lo, cfg.x_ref, cfg.hi
        )));
    }
    let scale = scale_density(spec, cfg.x_ref)?;
    let r = spec.r();

    let (lp, _) = local_rates(spec, cfg.lo);
    let y_psi = Vector2::new(1.0, lp / scale.s_prime(cfg.lo));
    let psi = integrate_branch(&scale, r, false, y_psi, cfg)?;

    let (_, lm) = local_rates(spec, cfg.hi);
    let y_phi = Vector2::new(1.0, lm / scale.s_prime(cfg.hi));
    let phi = integrate_branch(&scale, r, true, y_phi, cfg)?;

    let psi_ref = psi.evaluate(cfg.x_ref - cfg.lo).map(|v| v[0]);
    let phi_ref = phi.evaluate(cfg.hi - cfg.x_ref).map(|v| v[0]);
    let (psi_ref, phi_ref) = match (psi_ref, phi_ref) {
        (Some(p), Some(q)) if p > 0.0 && q > 0.0 => (p, q),
        _ => return Err(Error::OdeFailure("solution vanished before the reference point".into())),
    };
    let basis = NumericBasis { scale: scale.clone(), psi, phi, psi_norm: 1.0 / psi_ref, phi_norm: 1.0 / phi_ref, lo: cfg.lo, hi: cfg.hi };

    let map = spec.unit_map(cfg.x_ref);
    let grid = map.grid(cfg.lo, cfg.hi, 400);
    for w in grid.windows(2) {
        let (p0, p1) = (basis.psi(w[0]), basis.psi(w[1]));
        let (q0, q1) = (basis.phi(w[0]), basis.phi(w[1]));
        if !(p1 > p0 && q1 < q0 && p0 > 0.0 && q1 > 0.0) {
            return Err(Error::MonotonicityFailure(format!(
                "numeric pair is not monotone near {}; tighten the truncation",
                w[1]
            )));
        }
    }
    FundamentalPair::assemble(Arc::new(basis), scale, cfg.x_ref, PairSource::NumericOde, None)
}
