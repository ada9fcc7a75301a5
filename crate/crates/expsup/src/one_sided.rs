//! The one-boundary problem: stop the first time `X` exceeds a threshold.
//!
//! The optimal threshold is the up-crossing of `f̂ = g − ψg'/ψ'` that
//! maximises `g/ψ`. When it sits at a kink where `f̂` jumps over zero, smooth
//! fit fails and the representation function is discontinuous there.

use serde::{Deserialize, Serialize};

use crate::diffusion::{Boundary, DiffusionSpec};
use crate::error::{Error, Result};
use crate::functionals::{generator_at, generator_integral, l_functional, Payoff};
use crate::fundamental::FundamentalPair;
use crate::numerics::{integrate, sign_changes, Crossing, QuadOpts, Side};

/// Search settings for [`solve_one_sided`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneSidedConfig {
    /// Scan nodes, uniform in the unit coordinate.
    pub nodes: usize,
    /// Absolute tolerance on the threshold.
    pub xtol: f64,
    /// Truncate once `g/ψ` falls below this fraction of its maximum.
    pub trunc_ratio: f64,
    /// Never scan beyond unit coordinate `1 − unit_margin` (nor below `unit_margin`).
    pub unit_margin: f64,
    /// Slack allowed when testing `f̂` for monotonicity.
    pub monotone_tol: f64,
}

impl Default for OneSidedConfig {
    fn default() -> Self {
        OneSidedConfig { nodes: 4000, xtol: 1e-10, trunc_ratio: 1e-8, unit_margin: 1e-6, monotone_tol: 1e-9 }
    }
}

/// Solution of the one-sided problem.
#[derive(Clone, Debug)]
pub struct RepresentationOneSided {
    pub y_star: f64,
    pub smooth_fit: bool,
    /// `f̂(y*+)` when the threshold is a kink, otherwise 0.
    pub jump_at_boundary: f64,
    pub monotone_on_stop_region: bool,
    /// First scan node in the stopping region where `f̂` decreases.
    pub first_decrease: Option<f64>,
    /// Upper end of the scanned range.
    pub truncation: f64,
    upper: f64,
    payoff: Payoff,
    pair: FundamentalPair,
}

/// Plain-data view of a [`RepresentationOneSided`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneSidedSummary {
    pub y_star: f64,
    pub smooth_fit: bool,
    pub jump_at_boundary: f64,
    pub monotone_on_stop_region: bool,
    pub first_decrease: Option<f64>,
    pub truncation: f64,
}

impl RepresentationOneSided {
    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.pair
    }

    /// `f̂(x+)`.
    pub fn f_hat(&self, x: f64) -> f64 {
        f_hat(&self.payoff, &self.pair, x, Side::Right)
    }

    pub fn value(&self, x: f64) -> f64 {
        value_threshold_unchecked(&self.payoff, &self.pair, self.y_star, x)
    }

    /// `f̂·1_{[y*, b)}`, the function whose expected running supremum is `V`.
    pub fn representation(&self, x: f64) -> f64 {
        if x >= self.y_star {
            self.f_hat(x)
        } else {
            0.0
        }
    }

    pub fn summary(&self) -> OneSidedSummary {
        OneSidedSummary {
            y_star: self.y_star,
            smooth_fit: self.smooth_fit,
            jump_at_boundary: self.jump_at_boundary,
            monotone_on_stop_region: self.monotone_on_stop_region,
            first_decrease: self.first_decrease,
            truncation: self.truncation,
        }
    }
}

fn value_threshold_unchecked(payoff: &Payoff, pair: &FundamentalPair, y: f64, x: f64) -> f64 {
    if x >= y {
        payoff.value(x)
    } else {
        pair.psi(x) * payoff.value(y) / pair.psi(y)
    }
}

/// Value of stopping at the first passage above `y`.
pub fn value_threshold(payoff: &Payoff, pair: &FundamentalPair, y: f64, x: f64) -> Result<f64> {
    if payoff.value(y) < 0.0 {
        return Err(Error::DomainError(format!("g({y}) < 0; threshold outside the positive set")));
    }
    Ok(value_threshold_unchecked(payoff, pair, y, x))
}

/// `f̂(x±) = g(x) − ψ(x)g'(x±)/ψ'(x)`.
pub fn f_hat(payoff: &Payoff, pair: &FundamentalPair, x: f64, side: Side) -> f64 {
    payoff.value(x) - pair.psi(x) * payoff.derivative(x, side) / pair.psi_prime(x)
}

/// `ψ'(a+)/S'(a+)` where it is known from the boundary type.
fn lower_boundary_term(spec: &DiffusionSpec) -> Result<f64> {
    match spec.boundaries().0 {
        Boundary::Natural | Boundary::Entrance => Ok(0.0),
        _ => Err(Error::BoundaryTermUnknown),
    }
}

/// `f̂(x)` from its integral form
/// `[(L_ψ g)(y*+) − ∫_{y*}^x (𝒢_r g)ψm'] / [r∫_a^x ψm' + ψ'(a+)/S'(a+)]`.
pub fn f_hat_integral(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    y_star: f64,
    x: f64,
) -> Result<f64> {
    let term = lower_boundary_term(spec)?;
    f_hat_integral_with(payoff, pair, spec, y_star, x, term)
}

/// As [`f_hat_integral`] with an explicitly supplied `ψ'(a+)/S'(a+)`.
pub fn f_hat_integral_with(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    y_star: f64,
    x: f64,
    boundary_term: f64,
) -> Result<f64> {
    let opts = QuadOpts::tight();
    let num = l_functional((1.0, 0.0), payoff, pair, y_star, Side::Right)
        - generator_integral(payoff, pair, spec, |t| pair.psi(t), y_star, x, &opts)?;
    let a = spec.interval().0;
    let den = spec.r() * integrate(|t| pair.psi(t) * pair.m_prime(t), a, x, &[], &opts)? + boundary_term;
    Ok(num / den)
}

/// Locates the optimal threshold and fills in the representation.
pub fn solve_one_sided(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    cfg: &OneSidedConfig,
) -> Result<RepresentationOneSided> {
    let map = spec.unit_map(spec.reference_point());
    let (t_lo, t_hi) = (cfg.unit_margin, 1.0 - cfg.unit_margin);
    let n = cfg.nodes.max(16);
    let grid: Vec<f64> = (0..n).map(|k| map.from_unit(t_lo + (t_hi - t_lo) * k as f64 / (n - 1) as f64)).collect();

    let ratio: Vec<f64> = grid.iter().map(|&x| payoff.value(x) / pair.psi(x)).collect();
    let (imax, rmax) = ratio
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .ok_or(Error::NoPositiveSet)?;
    if !(rmax > 0.0) {
        return Err(Error::NoPositiveSet);
    }
    // truncation: first node past the maximum where g/ψ is negligible
    let cut = (imax..n).find(|&k| ratio[k] < cfg.trunc_ratio * rmax).unwrap_or(n - 1);
    let tail = &ratio[cut.saturating_sub(8)..=cut];
    let decaying = tail.windows(2).all(|w| w[1] <= w[0]) && ratio[cut] < 1e-3 * rmax;
    if !decaying {
        return Err(Error::LimitViolation(format!(
            "g/ψ = {:e} at x = {:e} (max {:e}); it must vanish toward the upper end",
            ratio[cut], grid[cut], rmax
        )));
    }
    let scan = &grid[..=cut];
    let truncation = grid[cut];

    let ups = sign_changes(|x, s| f_hat(payoff, pair, x, s), scan, payoff.kinks(), Crossing::Up, cfg.xtol)?;
    let best = ups
        .iter()
        .filter(|c| payoff.value(c.x) > 0.0)
        .max_by(|p, q| (payoff.value(p.x) / pair.psi(p.x)).total_cmp(&(payoff.value(q.x) / pair.psi(q.x))))
        .copied()
        .ok_or_else(|| Error::NoRoot("f̂ has no up-crossing inside the positive set".into()))?;

    let y = best.x;
    let smooth_fit = !best.at_kink;
    let jump = if smooth_fit { 0.0 } else { f_hat(payoff, pair, y, Side::Right) };

    // monotonicity of f̂ on the scanned part of [y*, b)
    let mut pts: Vec<(f64, f64)> = vec![(y, f_hat(payoff, pair, y, Side::Right))];
    for &x in scan.iter().filter(|&&x| x > y) {
        if payoff.is_kink(x) {
            pts.push((x, f_hat(payoff, pair, x, Side::Left)));
        }
        pts.push((x, f_hat(payoff, pair, x, Side::Right)));
    }
    for &k in payoff.kinks_in(y, truncation).iter() {
        if !scan.contains(&k) {
            pts.push((k, f_hat(payoff, pair, k, Side::Left)));
            pts.push((k, f_hat(payoff, pair, k, Side::Right)));
        }
    }
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1e-300);
    let first_decrease = pts.windows(2).find(|w| w[1].1 < w[0].1 - cfg.monotone_tol * scale).map(|w| w[1].0);

    Ok(RepresentationOneSided {
        y_star: y,
        smooth_fit,
        jump_at_boundary: jump,
        monotone_on_stop_region: first_decrease.is_none(),
        first_decrease,
        truncation,
        upper: spec.interval().1,
        payoff: payoff.clone(),
        pair: pair.clone(),
    })
}

/// `J(x) = ψ(x)∫_{x∨y*}^b f̂(z)ψ'(z)/ψ²(z) dz`.
pub fn j_value(rep: &RepresentationOneSided, x: f64) -> Result<f64> {
    let pair = &rep.pair;
    let lo = x.max(rep.y_star);
    let b = rep.upper;
    let kinks = rep.payoff.kinks_in(lo, b);
    let f = |z: f64| {
        let p = pair.psi(z);
        rep.f_hat(z) * pair.psi_prime(z) / (p * p)
    };
    let opts = QuadOpts { abs_tol: 0.0, rel_tol: 1e-11, max_intervals: 4000 };
    Ok(pair.psi(x) * integrate(f, lo, b, &kinks, &opts)?)
}

/// Findings of [`diagnose_monotonicity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub y: f64,
    /// `g'' ≤ 0` and `ψ'' ≥ 0` on the scanned part of `[y, b)`.
    pub concave_convex: bool,
    /// Nodes where the concavity/convexity condition fails.
    pub concave_convex_failures: Vec<f64>,
    /// Some `z < y` where `g/ψ` is locally increasing, if found.
    pub z: Option<f64>,
    /// `g'(k+) ≤ g'(k−)` at every kink in `(z, b)`.
    pub kinks_concave: bool,
    /// `𝒢_r g` is non-increasing and non-positive on `(z, b)`.
    pub generator_ok: bool,
    /// The second sufficient condition as a whole.
    pub generator_condition: bool,
    /// `𝒟(x) = (𝒢_r g)ψ'/S' + r(L_ψ g)`; `f̂` is non-decreasing where it is `≤ 0`.
    pub d_trace: Vec<(f64, f64)>,
    /// Nodes where `𝒟 > 0`, i.e. where `f̂` decreases.
    pub f_hat_decreasing_at: Vec<f64>,
}

/// Checks the sufficient conditions for `f̂` to be non-decreasing on `[y, b)`.
pub fn diagnose_monotonicity(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    y: f64,
) -> Result<DiagnosisReport> {
    if !spec.contains(y) {
        return Err(Error::DomainError(format!("{y} outside {:?}", spec.interval())));
    }
    let map = spec.unit_map(y);
    // from y out to the far end; unit_map puts y at 1/2 on half-lines
    let grid: Vec<f64> = (0..600)
        .map(|k| {
            let t = map.to_unit(y) + (1.0 - 1e-4 - map.to_unit(y)) * k as f64 / 599.0;
            map.from_unit(t)
        })
        .collect();
    let tol = 1e-9;

    let mut failures = Vec::new();
    for &x in &grid {
        if payoff.is_kink(x) {
            continue;
        }
        let p = pair.point(x);
        let d2psi = spec.harmonic_second_derivative(x, p.psi, p.dpsi);
        let g2 = payoff.second_derivative(x, Side::Right);
        if g2 > tol * payoff.value(x).abs().max(1.0) || d2psi < -tol * p.psi {
            failures.push(x);
        }
    }
    for &k in payoff.kinks_in(y, f64::INFINITY).iter() {
        if payoff.derivative_jump(k) > 0.0 {
            failures.push(k);
        }
    }
    failures.sort_by(f64::total_cmp);

    // condition B: search below y for a point where g/ψ increases (f̂ < 0)
    let lo_map = spec.unit_map(spec.reference_point());
    let ty = lo_map.to_unit(y);
    let z = (1..400)
        .map(|k| lo_map.from_unit(ty * (1.0 - k as f64 / 400.0)))
        .find(|&x| payoff.value(x) > 0.0 && f_hat(payoff, pair, x, Side::Right) < 0.0);
    let (kinks_concave, generator_ok) = match z {
        Some(z) => {
            let kc = payoff.kinks_in(z, f64::INFINITY).iter().all(|&k| payoff.derivative_jump(k) <= 0.0);
            let mut pts: Vec<f64> = grid.clone();
            let lower = lo_map.to_unit(z);
            pts.extend((0..200).map(|k| lo_map.from_unit(lower + (ty - lower) * k as f64 / 200.0)));
            pts.sort_by(f64::total_cmp);
            let vals: Vec<f64> = pts
                .iter()
                .filter(|x| !payoff.is_kink(**x))
                .map(|&x| generator_at(payoff, spec, x, Side::Right))
                .collect();
            let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            let ok = vals.iter().all(|&v| v <= tol * scale) && vals.windows(2).all(|w| w[1] <= w[0] + tol * scale);
            (kc, ok)
        }
        None => (false, false),
    };

    let d_trace: Vec<(f64, f64)> = grid
        .iter()
        .filter(|x| !payoff.is_kink(**x))
        .map(|&x| {
            let gen = generator_at(payoff, spec, x, Side::Right);
            let d = gen * pair.psi_prime(x) / pair.s_prime(x)
                + spec.r() * l_functional((1.0, 0.0), payoff, pair, x, Side::Right);
            (x, d)
        })
        .collect();
    let dscale = d_trace.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1e-300);
    let f_hat_decreasing_at = d_trace.iter().filter(|p| p.1 > tol * dscale).map(|p| p.0).collect();

    Ok(DiagnosisReport {
        y,
        concave_convex: failures.is_empty(),
        concave_convex_failures: failures,
        z,
        kinks_concave,
        generator_ok,
        generator_condition: z.is_some() && kinks_concave && generator_ok,
        d_trace,
        f_hat_decreasing_at,
    })
}
