//! Monte Carlo over paths stopped at an independent `Exp(r)` time.
//!
//! Every path owns a ChaCha8 stream keyed by `(seed, path index)`, so the
//! results do not depend on how rayon schedules the work, and sums are
//! reduced pairwise in path order. Estimates are therefore bit-identical
//! across runs and thread counts.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Boundary, DiffusionSpec, Family};
use crate::error::{Error, Result};
use crate::fundamental::FundamentalPair;
use crate::laws::{inf_cdf, joint_cdf, sup_cdf};
use crate::numerics::pairwise_sum;

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact log-normal steps with a Brownian-bridge draw of each step's
    /// extremes. GBM only.
    ExactGbm,
    /// Plain Euler–Maruyama on the grid; extremes are biased inwards.
    EulerMaruyama,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSimConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Pair every path with its mirror image (`Z → −Z`).
    pub antithetic: bool,
}

impl Default for PathSimConfig {
    fn default() -> Self {
        PathSimConfig { scheme: Scheme::ExactGbm, dt: 0.01, n_paths: 100_000, seed: 0x5eed_2024, antithetic: false }
    }
}

impl PathSimConfig {
    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.n_paths == 0 {
            return Err(Error::ParamError(format!("need dt > 0 and n_paths ≥ 1, got {} and {}", self.dt, self.n_paths)));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::ParamError("antithetic sampling needs an even n_paths".into()));
        }
        Ok(())
    }
}

/// What one path saw up to its exponential time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathExtremes {
    pub horizon: f64,
    pub inf: f64,
    pub sup: f64,
    pub end: f64,
}

/// Mean and standard error of a Monte Carlo estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Independent samples behind the estimate (antithetic pairs count once).
    pub samples: usize,
    /// Euler paths dropped for leaving the state space.
    pub discarded: usize,
}

impl McEstimate {
    /// `|estimate − target| ≤ k·s.e. + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_error + slack
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(v) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

type Payload<'f> = Option<&'f (dyn Fn(f64) -> f64 + Sync)>;

struct Stepper {
    scheme: Scheme,
    mu: f64,
    sigma: f64,
}

fn stepper(spec: &DiffusionSpec, scheme: Scheme) -> Result<Stepper> {
    match (scheme, spec.family()) {
        (Scheme::ExactGbm, Family::Gbm { mu, sigma }) => Ok(Stepper { scheme, mu, sigma }),
        (Scheme::ExactGbm, f) => Err(Error::SchemeError(format!("exact stepping needs a GBM, got {f:?}"))),
        (Scheme::EulerMaruyama, _) => Ok(Stepper { scheme, mu: f64::NAN, sigma: f64::NAN }),
    }
}

/// One path with `±` noise. Returns `None` when an Euler path is discarded.
fn one_path(spec: &DiffusionSpec, st: &Stepper, x: f64, dt: f64, mut rng: ChaCha8Rng, sign: f64, f: Payload<'_>) -> Option<(PathExtremes, f64)> {
    let horizon: f64 = rng.sample::<f64, _>(Exp1) / spec.r();
    let n = ((horizon / dt).ceil() as usize).max(1);
    let h = horizon / n as f64;
    let sh = h.sqrt();
    let fv = |y: f64| f.map_or(0.0, |f| f(y));
    let (mut inf, mut sup) = (x, x);
    let mut best = fv(x);
    let (a, b) = spec.interval();
    match st.scheme {
        Scheme::ExactGbm => {
            let nu = st.mu - 0.5 * st.sigma * st.sigma;
            let s2h = st.sigma * st.sigma * h;
            let mut l = x.ln();
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let l1 = l + nu * h + sign * st.sigma * sh * z;
                // bridge extremes of the log-process over the step
                let u1 = 1.0 - rng.random::<f64>();
                let u2 = 1.0 - rng.random::<f64>();
                let d = (l1 - l) * (l1 - l);
                let hi = 0.5 * (l + l1 + (d - 2.0 * s2h * u1.ln()).sqrt());
                let lo = 0.5 * (l + l1 - (d - 2.0 * s2h * u2.ln()).sqrt());
                let (ehi, elo) = (hi.exp(), lo.exp());
                sup = sup.max(ehi);
                inf = inf.min(elo);
                if f.is_some() {
                    best = best.max(fv(ehi)).max(fv(elo)).max(fv(l1.exp()));
                }
                l = l1;
            }
            Some((PathExtremes { horizon, inf, sup, end: l.exp() }, best))
        }
        Scheme::EulerMaruyama => {
            let mut y = x;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let mut y1 = y + spec.mu(y) * h + sign * spec.sigma(y) * sh * z;
                if y1 <= a {
                    match spec.boundaries().0 {
                        Boundary::RegularReflected => y1 = 2.0 * a - y1,
                        Boundary::Exit | Boundary::RegularKilled => {
                            inf = a;
                            best = best.max(fv(a));
                            return Some((PathExtremes { horizon, inf, sup, end: a }, best));
                        }
                        _ => return None,
                    }
                }
                if y1 >= b {
                    match spec.boundaries().1 {
                        Boundary::RegularReflected => y1 = 2.0 * b - y1,
                        Boundary::Exit | Boundary::RegularKilled => {
                            sup = b;
                            best = best.max(fv(b));
                            return Some((PathExtremes { horizon, inf, sup, end: b }, best));
                        }
                        _ => return None,
                    }
                }
                y = y1;
                sup = sup.max(y);
                inf = inf.min(y);
                best = best.max(fv(y));
            }
            Some((PathExtremes { horizon, inf, sup, end: y }, best))
        }
    }
}

fn stream(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Per sample: the path(s) it consists of and the averaged payload.
type Sample = (Vec<PathExtremes>, f64);

fn run(spec: &DiffusionSpec, x: f64, cfg: &PathSimConfig, f: Payload<'_>) -> Result<(Vec<Sample>, usize)> {
    cfg.check()?;
    if !spec.contains(x) {
        return Err(Error::DomainError(format!("start {x} outside {:?}", spec.interval())));
    }
    let st = stepper(spec, cfg.scheme)?;
    let units = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let out: Vec<Option<Sample>> = (0..units)
        .into_par_iter()
        .map(|k| {
            let rng = stream(cfg.seed, k);
            if cfg.antithetic {
                let p = one_path(spec, &st, x, cfg.dt, rng.clone(), 1.0, f)?;
                let q = one_path(spec, &st, x, cfg.dt, rng, -1.0, f)?;
                Some((vec![p.0, q.0], 0.5 * (p.1 + q.1)))
            } else {
                one_path(spec, &st, x, cfg.dt, rng, 1.0, f).map(|p| (vec![p.0], p.1))
            }
        })
        .collect();
    let discarded = out.iter().filter(|o| o.is_none()).count();
    Ok((out.into_iter().flatten().collect(), discarded))
}

/// Estimates `E_x[sup_{t≤T} f(X_t)·1{X_t ∈ region}]`; off the region the
/// payload counts as 0.
pub fn simulate_expected_sup<F, R>(f: F, region: R, spec: &DiffusionSpec, x: f64, cfg: &PathSimConfig) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
    R: Fn(f64) -> bool + Sync,
{
    let payload = |y: f64| if region(y) { f(y) } else { 0.0 };
    let (samples, discarded) = run(spec, x, cfg, Some(&payload))?;
    let v: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (estimate, std_error) = mean_se(&v);
    Ok(McEstimate { estimate, std_error, samples: v.len(), discarded })
}

/// Simulated `(I_T, M_T)` for every path.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremesSample {
    pub paths: Vec<PathExtremes>,
    /// Antithetic partner indices share a sample; `true` if paths come in pairs.
    pub paired: bool,
    pub discarded: usize,
}

impl ExtremesSample {
    /// Mean and standard error of `h(I_T, M_T)`, e.g. the shortcut
    /// `f₁(I_T)1{I_T ≤ z*} ∨ f₂(M_T)1{M_T ≥ y*}`.
    pub fn estimate<H: Fn(f64, f64) -> f64>(&self, h: H) -> McEstimate {
        let v: Vec<f64> = if self.paired {
            self.paths.chunks(2).map(|c| 0.5 * (h(c[0].inf, c[0].sup) + h(c[1].inf, c[1].sup))).collect()
        } else {
            self.paths.iter().map(|p| h(p.inf, p.sup)).collect()
        };
        let (estimate, std_error) = mean_se(&v);
        McEstimate { estimate, std_error, samples: v.len(), discarded: self.discarded }
    }

    /// Frequency of an event with its binomial standard error.
    pub fn frequency<E: Fn(&PathExtremes) -> bool>(&self, event: E) -> McEstimate {
        self.estimate(|i, m| if event(&PathExtremes { horizon: 0.0, inf: i, sup: m, end: 0.0 }) { 1.0 } else { 0.0 })
    }
}

/// Simulates paths and keeps only their extremes.
pub fn simulate_extremes(spec: &DiffusionSpec, x: f64, cfg: &PathSimConfig) -> Result<ExtremesSample> {
    let (samples, discarded) = run(spec, x, cfg, None)?;
    Ok(ExtremesSample { paths: samples.into_iter().flat_map(|s| s.0).collect(), paired: cfg.antithetic, discarded })
}

/// Analytic against empirical value of one probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub i: f64,
    pub m: f64,
    pub valid: bool,
    pub note: Option<String>,
    pub joint: Option<Comparison>,
    pub sup: Option<Comparison>,
    pub inf: Option<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub x: f64,
    pub n_paths: usize,
    /// Bias allowance added to the `3 s.e.` band.
    pub allowance: f64,
    pub rows: Vec<ProbeRow>,
    pub all_within: bool,
}

/// Bias allowance for the empirical checks: none for bridged exact steps,
/// order `√dt` for Euler.
pub fn discretization_allowance(cfg: &PathSimConfig) -> f64 {
    match cfg.scheme {
        Scheme::ExactGbm => 0.0,
        Scheme::EulerMaruyama => cfg.dt.sqrt(),
    }
}

/// Compares `P(I_T ≤ i, M_T ≤ m)`, `P(M_T ≤ m)` and `P(I_T ≤ i)` against
/// their frequencies in one shared simulation. Probes with `i ≥ x` or
/// `m ≤ x` are reported as invalid.
pub fn empirical_law_check(
    spec: &DiffusionSpec,
    pair: &FundamentalPair,
    x: f64,
    probes: &[(f64, f64)],
    cfg: &PathSimConfig,
) -> Result<LawReport> {
    let sample = simulate_extremes(spec, x, cfg)?;
    let allowance = discretization_allowance(cfg);
    let cmp = |analytic: f64, est: McEstimate| Comparison {
        analytic,
        empirical: est.estimate,
        std_error: est.std_error,
        within: est.agrees_with(analytic, 3.0, allowance),
    };
    let rows: Vec<ProbeRow> = probes
        .iter()
        .map(|&(i, m)| {
            if !(i < x && x < m) {
                return ProbeRow {
                    i,
                    m,
                    valid: false,
                    note: Some(format!("need i < x < m, got i={i}, x={x}, m={m}")),
                    joint: None,
                    sup: None,
                    inf: None,
                };
            }
            let joint = joint_cdf(pair, x, i, m).map(|a| cmp(a, sample.frequency(|p| p.inf <= i && p.sup <= m)));
            let sup = sup_cdf(pair, x, m).map(|a| cmp(a, sample.frequency(|p| p.sup <= m)));
            let inf = inf_cdf(pair, x, i).map(|a| cmp(a, sample.frequency(|p| p.inf <= i)));
            ProbeRow { i, m, valid: true, note: None, joint: joint.ok(), sup: sup.ok(), inf: inf.ok() }
        })
        .collect();
    let all_within = rows
        .iter()
        .filter(|r| r.valid)
        .all(|r| [r.joint, r.sup, r.inf].iter().all(|c| c.is_some_and(|c| c.within)));
    Ok(LawReport { x, n_paths: cfg.n_paths, allowance, rows, all_within })
}

/// `P(M_T ≤ m)` estimated at several step sizes, next to the exact value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub dt: f64,
    pub estimate: McEstimate,
    pub analytic: f64,
}

/// Discretisation trend of the running-maximum law.
pub fn sup_cdf_trend(
    spec: &DiffusionSpec,
    pair: &FundamentalPair,
    x: f64,
    m: f64,
    cfg: &PathSimConfig,
    dts: &[f64],
) -> Result<Vec<TrendPoint>> {
    let analytic = sup_cdf(pair, x, m)?;
    dts.iter()
        .map(|&dt| {
            let c = PathSimConfig { dt, ..*cfg };
            let s = simulate_extremes(spec, x, &c)?;
            Ok(TrendPoint { dt, estimate: s.frequency(|p| p.sup <= m), analytic })
        })
        .collect()
}
