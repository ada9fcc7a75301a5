//! The two-boundary problem: stop on the first exit from an interval
//! `(z, y)`.
//!
//! Notation follows the one-sided module. For `i < y` and `z < m`,
//!
//! * `F₁^y(i)` is the weighted mean of `−(𝒢_r g)/r` over `(i, y)` against
//!   `φ̂_y m'`; it has the sign of `∂V_{i,y}/∂i`;
//! * `F₂^z(m)` is the same mean over `(z, m)` against `ψ̂_z m'`; it has the
//!   sign of `−∂V_{z,m}/∂m`.
//!
//! The optimal pair zeroes both. The matching curve `β` solves
//! `F₂^i(β) = F₁^β(i)`, and the representation functions are
//! `f₁(i) = F₁^{β(i)}(i)` and `f₂(β(i)) = f₁(i)`.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::curve::{Direction, Interp, TabulatedCurve};
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::functionals::{generator, generator_at, generator_integral, l_functional, Payoff};
use crate::fundamental::FundamentalPair;
use crate::numerics::{brent, golden_min, integrate, sign_changes, Crossing, QuadOpts, Side, UnitMap};
use crate::one_sided::f_hat;

/// Settings for the two-sided solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoSidedConfig {
    /// Nodes of the scan in the upper boundary.
    pub y_nodes: usize,
    /// Nodes of the scan in the lower boundary.
    pub z_nodes: usize,
    /// Nodes of the generator shape check.
    pub shape_nodes: usize,
    /// Nodes of the `β` tabulation.
    pub beta_nodes: usize,
    /// Root tolerance, relative to `max(1, |x|)`.
    pub xtol: f64,
    /// The lower cut of the `β` trace: `φ(z*)/φ(i) ≤ tail_prob`.
    pub tail_prob: f64,
    /// Closest approach to either end, in the unit coordinate.
    pub unit_margin: f64,
    /// Tolerance on the agreement of the closed and integral forms.
    pub match_tol: f64,
    /// How many `β` nodes get the integral-form check.
    pub match_checks: usize,
    /// Slack for the monotonicity of `f₁`, `f₂` and `β`.
    pub monotone_tol: f64,
    /// Polish smooth solutions with Newton's method.
    pub newton: bool,
}

impl Default for TwoSidedConfig {
    fn default() -> Self {
        TwoSidedConfig {
            y_nodes: 1200,
            z_nodes: 300,
            shape_nodes: 2000,
            beta_nodes: 200,
            xtol: 1e-13,
            tail_prob: 1e-14,
            unit_margin: 1e-6,
            match_tol: 1e-6,
            match_checks: 24,
            monotone_tol: 1e-7,
            newton: true,
        }
    }
}

/// Everything needed at one point: the pair, `S'` and the payoff.
#[derive(Clone, Copy, Debug)]
struct Pt {
    psi: f64,
    phi: f64,
    dpsi: f64,
    dphi: f64,
    sp: f64,
    g: f64,
    dg_l: f64,
    dg_r: f64,
}

impl Pt {
    fn dg(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.dg_l,
            Side::Right => self.dg_r,
        }
    }
}

#[derive(Clone)]
struct Ctx {
    payoff: Payoff,
    pair: FundamentalPair,
}

impl Ctx {
    fn pt(&self, x: f64) -> Pt {
        let p = self.pair.point(x);
        Pt {
            psi: p.psi,
            phi: p.phi,
            dpsi: p.dpsi,
            dphi: p.dphi,
            sp: p.sp,
            g: self.payoff.value(x),
            dg_l: self.payoff.derivative(x, Side::Left),
            dg_r: self.payoff.derivative(x, Side::Right),
        }
    }

    fn b(&self) -> f64 {
        self.pair.wronskian()
    }

    // φ̂_y/ψ(y) and ψ̂_z/φ(z) keep everything finite when the other end
    // sits deep in a boundary layer.

    /// `(φ̂_y(t), φ̂_y'(t))/ψ(y)`.
    fn phi_hat_n(y: &Pt, t: &Pt) -> (f64, f64) {
        let q = y.phi / y.psi;
        (t.phi - q * t.psi, t.dphi - q * t.dpsi)
    }

    /// `(ψ̂_z(t), ψ̂_z'(t))/φ(z)`.
    fn psi_hat_n(z: &Pt, t: &Pt) -> (f64, f64) {
        let q = z.psi / z.phi;
        (t.psi - q * t.phi, t.dpsi - q * t.dphi)
    }

    /// `F₁^y(i)` from the closed form.
    fn f1(&self, i: &Pt, y: &Pt, side: Side) -> f64 {
        let (ph, dph) = Self::phi_hat_n(y, i);
        let b = self.b() / y.psi;
        (i.dg(side) * ph / i.sp - i.g * dph / i.sp - b * y.g) / (-b - dph / i.sp)
    }

    /// `F₂^z(m)` from the closed form.
    fn f2(&self, z: &Pt, m: &Pt, side: Side) -> f64 {
        let (ps, dps) = Self::psi_hat_n(z, m);
        let b = self.b() / z.phi;
        (m.dg(side) * ps / m.sp - m.g * dps / m.sp + b * z.g) / (b - dps / m.sp)
    }

    /// `D(i, y) = F₂^i(y) − F₁^y(i)`; `β(i)` is its first up-crossing in `y`.
    fn d(&self, i: &Pt, y: &Pt, side: Side) -> f64 {
        self.f2(i, y, side) - self.f1(i, y, Side::Right)
    }
}

fn order(z: f64, y: f64) -> Result<()> {
    if z < y {
        Ok(())
    } else {
        Err(Error::DomainError(format!("need z < y, got z={z}, y={y}")))
    }
}

/// Value of stopping on the first exit from `(z, y)`.
pub fn value_two_sided(payoff: &Payoff, pair: &FundamentalPair, z: f64, y: f64, x: f64) -> Result<f64> {
    order(z, y)?;
    if x <= z || x >= y {
        return Ok(payoff.value(x));
    }
    let lower = pair.phi_hat(y, x) / pair.phi_hat(y, z);
    let upper = pair.psi_hat(z, x) / pair.psi_hat(z, y);
    Ok(lower * payoff.value(z) + upper * payoff.value(y))
}

/// `(A₁, A₂)` with `V_{z,y} = A₁φ + A₂ψ` inside `(z, y)`.
pub fn value_coefficients(payoff: &Payoff, pair: &FundamentalPair, z: f64, y: f64) -> Result<(f64, f64)> {
    order(z, y)?;
    let (gz, gy) = (payoff.value(z), payoff.value(y));
    let det = pair.phi(z) * pair.psi(y) - pair.phi(y) * pair.psi(z);
    Ok(((gz * pair.psi(y) - gy * pair.psi(z)) / det, (gy * pair.phi(z) - gz * pair.phi(y)) / det))
}

/// `F₁^y(i)`, i.e. `h₁(i, y)`, from the closed form; `side` picks `g'(i±)`.
pub fn lower_ratio(payoff: &Payoff, pair: &FundamentalPair, i: f64, y: f64, side: Side) -> f64 {
    let c = Ctx { payoff: payoff.clone(), pair: pair.clone() };
    c.f1(&c.pt(i), &c.pt(y), side)
}

/// `F₂^z(m)`, i.e. `h₂(m, z)`, from the closed form; `side` picks `g'(m±)`.
pub fn upper_ratio(payoff: &Payoff, pair: &FundamentalPair, z: f64, m: f64, side: Side) -> f64 {
    let c = Ctx { payoff: payoff.clone(), pair: pair.clone() };
    c.f2(&c.pt(z), &c.pt(m), side)
}

/// `F₁^y(i+)` as `−∫_i^y (𝒢_r g)φ̂_y m' / (r∫_i^y φ̂_y m')`.
pub fn lower_ratio_integral(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec, i: f64, y: f64) -> Result<f64> {
    order(i, y)?;
    let opts = QuadOpts::tight();
    let w = |t: f64| pair.phi_hat(y, t);
    let num = generator_integral(payoff, pair, spec, w, i, y, &opts)?;
    let den = integrate(|t| w(t) * pair.m_prime(t), i, y, &[], &opts)?;
    Ok(-num / (spec.r() * den))
}

/// `F₂^z(m−)` as `−∫_z^m (𝒢_r g)ψ̂_z m' / (r∫_z^m ψ̂_z m')`.
pub fn upper_ratio_integral(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec, z: f64, m: f64) -> Result<f64> {
    order(z, m)?;
    let opts = QuadOpts::tight();
    let w = |t: f64| pair.psi_hat(z, t);
    let num = generator_integral(payoff, pair, spec, w, z, m, &opts)?;
    let den = integrate(|t| w(t) * pair.m_prime(t), z, m, &[], &opts)?;
    Ok(-num / (spec.r() * den))
}

/// The harmonic weight `u₁` of `H(z, y)` at `x`.
pub fn u1(pair: &FundamentalPair, z: f64, y: f64, x: f64) -> f64 {
    let (pz, py) = (pair.point(z), pair.point(y));
    pair.phi(x) * (py.dpsi / py.sp - pz.dpsi / pz.sp) - pair.psi(x) * (py.dphi / py.sp - pz.dphi / pz.sp)
}

/// `(u₁(z), u₁(y))`; the first should be positive and the second negative.
pub fn u1_boundary_values(pair: &FundamentalPair, z: f64, y: f64) -> (f64, f64) {
    (u1(pair, z, y, z), u1(pair, z, y, y))
}

/// `H(z, y) = ∫_z^y (𝒢_r g) u₁ m'`, kink atoms included.
pub fn h_function(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec, z: f64, y: f64) -> Result<f64> {
    if z == y {
        return Ok(0.0);
    }
    order(z, y)?;
    generator_integral(payoff, pair, spec, |t| u1(pair, z, y, t), z, y, &QuadOpts::tight())
}

/// `(H_z, H_y)` from their integral expressions.
pub fn h_partials(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec, z: f64, y: f64) -> Result<(f64, f64)> {
    order(z, y)?;
    let opts = QuadOpts::tight();
    let r = spec.r();
    let (mz, my) = (pair.m_prime(z), pair.m_prime(y));
    let iz = generator_integral(payoff, pair, spec, |t| pair.psi_hat(z, t), z, y, &opts)?;
    let iy = generator_integral(payoff, pair, spec, |t| pair.phi_hat(y, t), z, y, &opts)?;
    let gz = generator_at(payoff, spec, z, Side::Right);
    let gy = generator_at(payoff, spec, y, Side::Left);
    let hz = r * mz * iz - gz * mz * (pair.psi_hat_prime(z, y) / pair.s_prime(y) - pair.psi_hat_prime(z, z) / pair.s_prime(z));
    let hy = r * my * iy - gy * my * (pair.phi_hat_prime(y, y) / pair.s_prime(y) - pair.phi_hat_prime(y, z) / pair.s_prime(z));
    Ok((hz, hy))
}

/// The optimal pair and how it was found.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalPair {
    pub z_star: f64,
    pub y_star: f64,
    pub smooth_fit_lower: bool,
    pub smooth_fit_upper: bool,
    /// Sign changes of the generator bracketing the continuation region.
    pub x0: f64,
    pub x1: f64,
    pub newton_polished: bool,
}

/// Scan grid in the unit coordinate with its cached point data.
struct Scan {
    xs: Vec<f64>,
    pts: Vec<Pt>,
}

impl Scan {
    fn new(ctx: &Ctx, xs: Vec<f64>) -> Self {
        let pts = xs.iter().map(|&x| ctx.pt(x)).collect();
        Scan { xs, pts }
    }
}

fn unit_grid(map: &UnitMap, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    map.grid(lo, hi, n)
}

/// Adds nodes closing in geometrically on `at` from inside `[lo, hi]`. Steep
/// fundamental solutions squeeze the continuation region around the
/// generator's sign changes, far below the uniform spacing.
fn cluster_at(mut grid: Vec<f64>, at: f64, lo: f64, hi: f64) -> Vec<f64> {
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    let width = (hi - lo).min(at.abs().max(1e-3));
    for k in 1..=40 {
        let d = width * 0.5f64.powi(k);
        if d < 1e-9 * at.abs().max(1.0) {
            break;
        }
        for x in [at - d, at + d] {
            if x > lo && x < hi && x > first && x < last {
                grid.push(x);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

struct Solver<'a> {
    ctx: Ctx,
    spec: &'a DiffusionSpec,
    cfg: TwoSidedConfig,
    map: UnitMap,
    ygrid: Scan,
}

impl<'a> Solver<'a> {
    fn tol(&self, x: f64) -> f64 {
        self.cfg.xtol * x.abs().max(1.0)
    }

    /// First up-crossing of `y ↦ h(y)` on `[lo, …)` along the cached grid,
    /// stopping as soon as one is found. A jump across a kink counts, also
    /// at `lo` itself.
    fn first_up<H: Fn(&Pt, Side) -> f64>(&self, lo: f64, h: H) -> Result<Option<(f64, bool)>> {
        let payoff = &self.ctx.payoff;
        let start = self.ygrid.xs.partition_point(|&t| t <= lo);
        let mut kinks = payoff.kinks_in(lo, f64::INFINITY).into_iter().peekable();
        let mut prev: Option<(f64, f64)> = None;
        let mut k = start;
        let mut first = Some(lo);
        loop {
            // next node in order: lo, then grid nodes merged with kinks
            let (y, pt) = if let Some(l) = first.take() {
                (l, self.ctx.pt(l))
            } else {
                let grid_next = self.ygrid.xs.get(k).copied();
                match (grid_next, kinks.peek().copied()) {
                    (None, None) => return Ok(None),
                    (Some(g), Some(q)) if q <= g => {
                        kinks.next();
                        if q == g {
                            k += 1;
                        }
                        (q, self.ctx.pt(q))
                    }
                    (None, Some(q)) => {
                        kinks.next();
                        (q, self.ctx.pt(q))
                    }
                    (Some(g), _) => {
                        k += 1;
                        (g, self.ygrid.pts[k - 1])
                    }
                }
            };
            let is_kink = payoff.is_kink(y);
            let vr = h(&pt, Side::Right);
            let vl = if is_kink { h(&pt, Side::Left) } else { vr };
            if let Some((py, pv)) = prev {
                if pv < 0.0 && vl >= 0.0 {
                    let root = if vl == 0.0 {
                        y
                    } else {
                        let f = |t: f64| h(&self.ctx.pt(t), if t >= y { Side::Left } else { Side::Right });
                        brent(f, py, y, self.tol(y))?
                    };
                    return Ok(Some((root, false)));
                }
            }
            if is_kink && vl < 0.0 && vr >= 0.0 {
                return Ok(Some((y, true)));
            }
            if vr.is_nan() {
                return Ok(None);
            }
            prev = Some((y, vr));
        }
    }

    /// First up-crossing of `y ↦ F₂^z(y)` on `[lo, ∞)`; `None` if `F₂^z`
    /// never turns from negative to non-negative.
    fn best_response(&self, z: f64, lo: f64) -> Result<Option<(f64, bool)>> {
        let pz = self.ctx.pt(z);
        self.first_up(lo, |p, side| self.ctx.f2(&pz, p, side))
    }

    /// Sign of `dV/dz` along the best response; `+1` when no interior
    /// response exists (raising `z` is then never harmful).
    fn outer(&self, z: f64, side: Side, x1: f64) -> Result<f64> {
        Ok(match self.best_response(z, x1.max(z))? {
            Some((y, _)) => self.ctx.f1(&self.ctx.pt(z), &self.ctx.pt(y), side),
            None => 1.0,
        })
    }

    /// Newton on `(L_ψ g)(z) = (L_ψ g)(y)`, `(L_φ g)(z) = (L_φ g)(y)`.
    fn newton(&self, z0: f64, y0: f64) -> (f64, f64, bool) {
        let (payoff, pair, spec) = (&self.ctx.payoff, &self.ctx.pair, self.spec);
        let resid = |z: f64, y: f64| -> [f64; 2] {
            let sc = |u: (f64, f64)| {
                let a = l_functional(u, payoff, pair, z, Side::Right);
                let b = l_functional(u, payoff, pair, y, Side::Left);
                (a - b) / a.abs().max(b.abs()).max(1e-300)
            };
            [sc((1.0, 0.0)), sc((0.0, 1.0))]
        };
        let norm = |r: [f64; 2]| r[0].hypot(r[1]);
        let (mut z, mut y) = (z0, y0);
        let mut r = resid(z, y);
        let mut improved = false;
        for _ in 0..8 {
            if norm(r) < 1e-15 {
                break;
            }
            // unscaled Jacobian, rescaled row-wise like the residual
            let lpz = l_functional((1.0, 0.0), payoff, pair, z, Side::Right);
            let lpy = l_functional((1.0, 0.0), payoff, pair, y, Side::Left);
            let lfz = l_functional((0.0, 1.0), payoff, pair, z, Side::Right);
            let lfy = l_functional((0.0, 1.0), payoff, pair, y, Side::Left);
            let s1 = lpz.abs().max(lpy.abs()).max(1e-300);
            let s2 = lfz.abs().max(lfy.abs()).max(1e-300);
            let gz = generator_at(payoff, spec, z, Side::Right) * pair.m_prime(z);
            let gy = generator_at(payoff, spec, y, Side::Left) * pair.m_prime(y);
            let j = [
                [-gz * pair.psi(z) / s1, gy * pair.psi(y) / s1],
                [-gz * pair.phi(z) / s2, gy * pair.phi(y) / s2],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dz = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
            let dy = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let (nz, ny) = (z - step * dz, y - step * dy);
                if nz < ny && self.spec.contains(nz) && self.spec.contains(ny) {
                    let nr = resid(nz, ny);
                    if norm(nr) < norm(r) {
                        z = nz;
                        y = ny;
                        r = nr;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            improved = true;
        }
        (z, y, improved)
    }
}

fn shape(payoff: &Payoff, spec: &DiffusionSpec, cfg: &TwoSidedConfig) -> Result<(f64, f64)> {
    let map = spec.unit_map(spec.reference_point());
    let grid = unit_grid(&map, map.from_unit(cfg.unit_margin), map.from_unit(1.0 - cfg.unit_margin), cfg.shape_nodes);
    let prof = generator(payoff, spec, &grid)?;
    if prof.sign_changes.len() != 2 {
        return Err(Error::ShapeViolation { found: prof.sign_changes.len() });
    }
    Ok((prof.sign_changes[0], prof.sign_changes[1]))
}

fn solver<'a>(payoff: &Payoff, pair: &FundamentalPair, spec: &'a DiffusionSpec, cfg: &TwoSidedConfig, y_lo: f64) -> Solver<'a> {
    let ctx = Ctx { payoff: payoff.clone(), pair: pair.clone() };
    let map = spec.unit_map(spec.reference_point());
    let hi = finite_upper(pair, &map, 1.0 - cfg.unit_margin);
    let ygrid = Scan::new(&ctx, cluster_at(unit_grid(&map, y_lo, hi, cfg.y_nodes), y_lo, y_lo, hi));
    Solver { ctx, spec, cfg: *cfg, map, ygrid }
}

/// Locates `(z*, y*)`.
pub fn solve_optimal_pair(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    cfg: &TwoSidedConfig,
) -> Result<OptimalPair> {
    let (x0, x1) = shape(payoff, spec, cfg)?;
    let s = solver(payoff, pair, spec, cfg, x1);
    let zlo = s.map.from_unit(cfg.unit_margin.max(1e-4));
    let zgrid = cluster_at(unit_grid(&s.map, zlo, x0, cfg.z_nodes), x0, zlo, x0);
    let downs = sign_changes(
        |z, side| s.outer(z, side, x1).unwrap_or(f64::NAN),
        &zgrid,
        payoff.kinks(),
        Crossing::Down,
        s.tol(x0),
    )?;
    let zc = *downs
        .first()
        .ok_or_else(|| Error::NoInteriorRoot(format!("dV/dz never changes sign on ({zlo:e}, {x0})")))?;
    let (y_star, y_kink) = s
        .best_response(zc.x, x1.max(zc.x))?
        .ok_or_else(|| Error::NoInteriorRoot(format!("no upper boundary for z = {}", zc.x)))?;

    let mut out = OptimalPair {
        z_star: zc.x,
        y_star,
        smooth_fit_lower: !zc.at_kink,
        smooth_fit_upper: !y_kink,
        x0,
        x1,
        newton_polished: false,
    };
    if cfg.newton && out.smooth_fit_lower && out.smooth_fit_upper && payoff.kinks_in(zc.x, y_star).len() == payoff.kinks_in(zc.x - 1e-9, y_star + 1e-9).len() {
        let (z, y, improved) = s.newton(out.z_star, out.y_star);
        let moved = (z - out.z_star).abs() < 1e-6 * z.abs().max(1.0) && (y - out.y_star).abs() < 1e-6 * y.abs().max(1.0);
        if improved && moved {
            out.z_star = z;
            out.y_star = y;
            out.newton_polished = true;
        }
    }
    Ok(out)
}

/// The traced matching curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTrace {
    /// `(i, β(i))` with `i` increasing up to `z*`.
    pub nodes: Vec<(f64, f64)>,
    pub beta: TabulatedCurve,
    /// `lim_{i↓a} β(i)` by extrapolation; `b` when `β` escapes.
    pub zeta: f64,
    /// `ζ` from `f̂(ζ) = f₁(a+)`, the independent cross-check.
    pub zeta_check: Option<f64>,
    pub warning: Option<String>,
    /// When `β` escapes to `b` below some `ζ̂`, that point; then
    /// `f₁ = g − g'φ/φ'` on `(a, ζ̂]`.
    pub lower_tail: Option<f64>,
}

impl<'a> Solver<'a> {
    /// First up-crossing of `D(i, ·)` on `[lo, …)`, preferring the bracket
    /// `[lo, hi]`; `None` when `D(i, ·)` never turns non-negative.
    fn beta_from(&self, i: f64, lo: f64, hi: f64) -> Result<Option<(f64, bool)>> {
        let pi = self.ctx.pt(i);
        let d = |y: f64, side: Side| self.ctx.d(&pi, &self.ctx.pt(y), side);
        if d(lo, Side::Right) >= 0.0 {
            return Ok(Some((lo, false)));
        }
        let kinks = self.ctx.payoff.kinks_in(lo, f64::INFINITY);
        if hi > lo {
            let local = sign_changes(d, &[lo, hi], &kinks, Crossing::Up, self.tol(hi))?;
            if let Some(c) = local.first() {
                return Ok(Some((c.x, c.at_kink)));
            }
        }
        self.first_up(hi.max(lo), |p, side| self.ctx.d(&pi, p, side))
    }

    fn i_cut(&self, x: f64) -> f64 {
        // smallest i with φ(x)/φ(i) ≥ tail_prob, by bisection in the unit coordinate
        let target = self.ctx.pair.phi(x) / self.cfg.tail_prob;
        let (mut lo, mut hi) = (self.cfg.unit_margin * 1e-3, self.map.to_unit(x));
        if self.ctx.pair.phi(self.map.from_unit(lo)) < target {
            return self.map.from_unit(lo);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.ctx.pair.phi(self.map.from_unit(mid)) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.map.from_unit(hi)
    }

    /// Lower end of the `β` trace. `β(i) − ζ` decays like `ψ(i)` while the
    /// mass below `i` decays like `1/φ(i)`; both must be negligible.
    fn trace_cut(&self, z: f64) -> f64 {
        let pair = &self.ctx.pair;
        let (pz, fz) = (pair.psi(z), pair.phi(z));
        let small = |i: f64| {
            let f = pair.phi(i);
            !f.is_finite() || f > 1e250 || (fz / f <= self.cfg.tail_prob && pair.psi(i) / pz <= self.cfg.tail_prob.sqrt())
        };
        let (mut lo, mut hi) = (1e-15f64, self.map.to_unit(z));
        if small(self.map.from_unit(hi)) {
            return z;
        }
        let floor = self.map.from_unit(lo);
        if !small(floor) {
            return floor;
        }
        // geometric bisection: the cut can sit many decades below z
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if small(self.map.from_unit(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-6 {
                break;
            }
        }
        let i = self.map.from_unit(lo);
        // keep φ finite with room to spare
        if pair.phi(i).is_finite() && pair.phi(i) < 1e250 { i } else { self.map.from_unit(hi) }
    }

    fn trace(&self, opt: &OptimalPair) -> Result<BetaTrace> {
        let (z, y) = (opt.z_star, opt.y_star);
        let ilo = self.trace_cut(z);
        let (tz, tlo) = (self.map.to_unit(z), self.map.to_unit(ilo));
        let n = self.cfg.beta_nodes.max(8);
        // geometric in the unit coordinate, dense near z*
        let ratio = (tlo / tz).powf(1.0 / (n - 1) as f64);
        let is: Vec<f64> = (0..n).map(|k| self.map.from_unit(tz * ratio.powi(k as i32))).collect();

        let mut nodes = vec![(z, y)];
        let mut escaped_at: Option<(f64, f64)> = None; // (last good i, first escaped i)
        for w in is.windows(2) {
            let i = w[1];
            let last = nodes.last().expect("non-empty").1;
            match self.beta_from(i, last, last)? {
                Some((b, _)) => {
                    if b < last - self.cfg.monotone_tol * last.abs().max(1.0) {
                        return Err(Error::NonMonotoneCurve { at: i });
                    }
                    nodes.push((i, b));
                }
                None => {
                    escaped_at = Some((w[0], i));
                    break;
                }
            }
        }
        nodes.reverse();

        let (zeta, lower_tail) = match escaped_at {
            Some((good, bad)) => {
                // refine the escape point ζ̂
                let (mut g, mut bd) = (good, bad);
                for _ in 0..60 {
                    let mid = 0.5 * (g + bd);
                    let last = nodes.first().expect("non-empty").1;
                    match self.beta_from(mid, last, last)? {
                        Some(_) => g = mid,
                        None => bd = mid,
                    }
                    if (g - bd).abs() < self.tol(g) {
                        break;
                    }
                }
                (self.spec.interval().1, Some(0.5 * (g + bd)))
            }
            None => {
                let k = nodes.len();
                let b = |j: usize| nodes[j].1;
                let mut zeta = b(0);
                if k >= 3 {
                    let (b0, b1, b2) = (b(2), b(1), b(0));
                    let den = b2 - 2.0 * b1 + b0;
                    let d1 = b2 - b1;
                    if den.abs() > 0.0 && (d1 / (b1 - b0)) < 1.0 && (d1 / (b1 - b0)) > 0.0 {
                        zeta = b2 - d1 * d1 / den;
                    }
                }
                (zeta, None)
            }
        };

        let beta = TabulatedCurve::new(nodes.clone(), Interp::Linear)?;
        Ok(BetaTrace { nodes, beta, zeta, zeta_check: None, warning: None, lower_tail })
    }
}

/// `f₁(a+) = lim_{i↓a} (g − g'φ/φ')(i)`, read off close to `a`.
pub fn lower_end_limit(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec) -> f64 {
    let map = spec.unit_map(spec.reference_point());
    let mut t = 1e-12;
    loop {
        let i = map.from_unit(t);
        let p = pair.point(i);
        let v = payoff.value(i) - payoff.derivative(i, Side::Right) * p.phi / p.dphi;
        if v.is_finite() || t > 1e-3 {
            return v;
        }
        t *= 10.0;
    }
}

/// Largest point below `b` where `ψ` and `φ` are comfortably representable.
pub(crate) fn finite_upper(pair: &FundamentalPair, map: &UnitMap, t_hi: f64) -> f64 {
    let ok = |t: f64| {
        let p = pair.point(map.from_unit(t));
        p.psi.is_finite() && p.psi < 1e200 && p.phi > 1e-200 && p.sp.is_finite() && p.sp > 0.0
    };
    if ok(t_hi) {
        return map.from_unit(t_hi);
    }
    let (mut lo, mut hi) = (map.to_unit(pair_anchor(map)), t_hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    map.from_unit(lo)
}

fn pair_anchor(map: &UnitMap) -> f64 {
    map.from_unit(0.5)
}

/// Traces `β` from `(z*, y*)` toward `a` and extracts `ζ`.
pub fn trace_beta(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    opt: &OptimalPair,
    cfg: &TwoSidedConfig,
) -> Result<BetaTrace> {
    let s = solver(payoff, pair, spec, cfg, opt.y_star);
    let mut tr = s.trace(opt)?;
    if tr.lower_tail.is_none() {
        // independent check: f̂(ζ) = f₁(a+)
        let f1a = lower_end_limit(payoff, pair, spec);
        let fh = |m: f64, side: Side| f_hat(payoff, pair, m, side) - f1a;
        let mut nodes = vec![opt.y_star];
        nodes.extend(s.ygrid.xs.iter().copied().filter(|&m| m > opt.y_star));
        let ups = sign_changes(fh, &nodes, payoff.kinks(), Crossing::Up, s.tol(tr.zeta))?;
        tr.zeta_check = ups.first().map(|c| c.x);
        if tr.zeta_check.is_none() && fh(opt.y_star, Side::Right) >= 0.0 {
            tr.zeta_check = Some(opt.y_star);
        }
        match tr.zeta_check {
            Some(c) if (c - tr.zeta).abs() > 1e-4 * tr.zeta.abs().max(1.0) => {
                tr.warning = Some(format!("ζ from the β limit ({}) and from f̂(ζ) = f₁(a+) ({c}) differ", tr.zeta));
            }
            None => tr.warning = Some("f̂ never reaches f₁(a+); ζ check unavailable".into()),
            _ => {}
        }
    }
    Ok(tr)
}

/// Solution of the two-sided problem with its representation.
#[derive(Clone)]
pub struct RepresentationTwoSided {
    pub z_star: f64,
    pub y_star: f64,
    pub zeta: f64,
    pub zeta_check: Option<f64>,
    pub smooth_fit_lower: bool,
    pub smooth_fit_upper: bool,
    pub beta: TabulatedCurve,
    pub alpha: TabulatedCurve,
    pub f1: TabulatedCurve,
    pub f2: TabulatedCurve,
    pub lower_tail: Option<f64>,
    pub warnings: Vec<String>,
    pub opt: OptimalPair,
    /// `(i, β(i))`, increasing in `i`.
    nodes: Vec<(f64, f64)>,
    ctx: Ctx,
    spec: DiffusionSpec,
    cfg: TwoSidedConfig,
}

impl std::fmt::Debug for RepresentationTwoSided {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RepresentationTwoSided")
            .field("z_star", &self.z_star)
            .field("y_star", &self.y_star)
            .field("zeta", &self.zeta)
            .field("smooth_fit_lower", &self.smooth_fit_lower)
            .field("smooth_fit_upper", &self.smooth_fit_upper)
            .field("lower_tail", &self.lower_tail)
            .finish()
    }
}

/// Plain-data view of a [`RepresentationTwoSided`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedSummary {
    pub z_star: f64,
    pub y_star: f64,
    pub zeta: f64,
    pub zeta_check: Option<f64>,
    pub smooth_fit_lower: bool,
    pub smooth_fit_upper: bool,
    pub lower_tail: Option<f64>,
    pub warnings: Vec<String>,
}

/// Computes `f₁`, `f₂` and `α` from a traced `β`, checking the closed form
/// of `f₁` against its integral form at every node.
pub fn f1_f2(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    trace: &BetaTrace,
    cfg: &TwoSidedConfig,
) -> Result<(TabulatedCurve, TabulatedCurve, TabulatedCurve)> {
    let ctx = Ctx { payoff: payoff.clone(), pair: pair.clone() };
    let mut f1 = Vec::with_capacity(trace.nodes.len());
    let vals: Vec<(f64, f64, f64)> = trace
        .nodes
        .iter()
        .map(|&(i, b)| (i, b, ctx.f1(&ctx.pt(i), &ctx.pt(b), Side::Right)))
        .collect();
    let scale = vals.iter().map(|v| v.2.abs()).fold(0.0, f64::max).max(1e-300);
    // the integral form is expensive; check an even subsample including both ends
    let n = vals.len();
    let every = (n / cfg.match_checks.max(2)).max(1);
    let mut worst: Option<(f64, f64, f64, f64)> = None;
    for (k, &(i, b, v)) in vals.iter().enumerate() {
        if (k % every == 0 || k + 1 == n) && b > i && !payoff.is_kink(i) && b < spec.interval().1 {
            let w = lower_ratio_integral(payoff, pair, spec, i, b)?;
            let dev = (w - v).abs() / scale;
            if worst.is_none_or(|t| dev > t.0) {
                worst = Some((dev, i, v, w));
            }
        }
        f1.push((i, v));
    }
    if let Some((dev, at, closed, integral)) = worst {
        if dev > cfg.match_tol {
            return Err(Error::MismatchError { at, closed, integral });
        }
    }
    let f1c = TabulatedCurve::new(f1.clone(), Interp::Linear)?;
    if let Some(at) = f1c.monotonicity_violation(Direction::Decreasing, cfg.monotone_tol * scale) {
        return Err(Error::MonotonicityFailure(format!("f1 increases near {at}")));
    }

    // f₂ on [y*, ζ) by matching, then the one-sided formula beyond ζ
    let mut f2: Vec<(f64, f64)> = f1.iter().zip(&trace.nodes).map(|(&(_, v), &(_, b))| (b, v)).collect();
    let b_end = spec.interval().1;
    if trace.zeta < b_end {
        let map = spec.unit_map(spec.reference_point());
        let tz = map.to_unit(trace.zeta);
        let top = map.to_unit(finite_upper(pair, &map, 1.0 - 1e-3));
        for k in 0..=100 {
            let m = map.from_unit(tz + (top - tz) * k as f64 / 100.0);
            if m > trace.zeta {
                f2.push((m, f_hat(payoff, pair, m, Side::Right)));
            }
        }
    }
    let f2c = TabulatedCurve::new(f2, Interp::Linear)?;
    let s2 = f2c.ys().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if let Some(at) = f2c.monotonicity_violation(Direction::Increasing, cfg.monotone_tol * s2) {
        return Err(Error::MonotonicityFailure(format!("f2 decreases near {at}")));
    }
    let a_end = spec.interval().0;
    let mut alpha: Vec<(f64, f64)> = trace.nodes.iter().map(|&(i, b)| (b, i)).collect();
    alpha.sort_by(|p, q| p.0.total_cmp(&q.0));
    // on a plateau of β keep the largest i for the smallest m
    alpha.dedup_by(|q, p| q.0 == p.0);
    if trace.zeta < b_end {
        alpha.push((trace.zeta, if a_end.is_finite() { a_end } else { trace.nodes[0].0 }));
    }
    let alpha = TabulatedCurve::new(alpha, Interp::Linear)?;
    Ok((f1c, f2c, alpha))
}

/// Runs the whole two-sided pipeline.
pub fn solve_two_sided(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    cfg: &TwoSidedConfig,
) -> Result<RepresentationTwoSided> {
    let opt = solve_optimal_pair(payoff, pair, spec, cfg)?;
    let trace = trace_beta(payoff, pair, spec, &opt, cfg)?;
    let (f1, f2, alpha) = f1_f2(payoff, pair, spec, &trace, cfg)?;
    Ok(RepresentationTwoSided {
        z_star: opt.z_star,
        y_star: opt.y_star,
        zeta: trace.zeta,
        zeta_check: trace.zeta_check,
        smooth_fit_lower: opt.smooth_fit_lower,
        smooth_fit_upper: opt.smooth_fit_upper,
        beta: trace.beta.clone(),
        alpha,
        f1,
        f2,
        lower_tail: trace.lower_tail,
        warnings: trace.warning.into_iter().collect(),
        opt,
        nodes: trace.nodes,
        ctx: Ctx { payoff: payoff.clone(), pair: pair.clone() },
        spec: spec.clone(),
        cfg: *cfg,
    })
}

impl RepresentationTwoSided {
    pub fn payoff(&self) -> &Payoff {
        &self.ctx.payoff
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.ctx.pair
    }

    pub fn summary(&self) -> TwoSidedSummary {
        TwoSidedSummary {
            z_star: self.z_star,
            y_star: self.y_star,
            zeta: self.zeta,
            zeta_check: self.zeta_check,
            smooth_fit_lower: self.smooth_fit_lower,
            smooth_fit_upper: self.smooth_fit_upper,
            lower_tail: self.lower_tail,
            warnings: self.warnings.clone(),
        }
    }

    /// `V(x)` at the optimal pair.
    pub fn value(&self, x: f64) -> f64 {
        value_two_sided(&self.ctx.payoff, &self.ctx.pair, self.z_star, self.y_star, x).unwrap_or(f64::NAN)
    }

    fn solver(&self) -> Solver<'_> {
        solver(&self.ctx.payoff, &self.ctx.pair, &self.spec, &self.cfg, self.y_star)
    }

    /// `β(i)` by a root solve bracketed from the tabulation; `b` below `ζ̂`.
    pub fn beta_at(&self, i: f64) -> f64 {
        self.beta_with(&self.solver(), i)
    }

    fn beta_with(&self, s: &Solver<'_>, i: f64) -> f64 {
        if i >= self.z_star {
            return self.y_star;
        }
        if let Some(zh) = self.lower_tail {
            if i <= zh {
                return self.spec.interval().1;
            }
        }
        let k = self.nodes.partition_point(|p| p.0 <= i);
        let (lo, hi) = if k == 0 {
            (self.nodes[0].1, self.nodes[0].1)
        } else if k >= self.nodes.len() {
            (self.y_star, self.y_star)
        } else {
            (self.nodes[k].1, self.nodes[k - 1].1)
        };
        match s.beta_from(i, lo, hi) {
            Ok(Some((b, _))) => b,
            _ => self.spec.interval().1,
        }
    }

    /// `α(m)`, the generalised inverse of `β`; `a` for `m ≥ ζ`.
    pub fn alpha_at(&self, m: f64) -> f64 {
        let a = self.spec.interval().0;
        if m >= self.zeta {
            return a;
        }
        if m <= self.y_star {
            return self.z_star;
        }
        // nodes are increasing in i with β decreasing
        let k = self.nodes.partition_point(|p| p.1 > m);
        if k == 0 {
            // above the tabulated range, between the last node and ζ
            // below the trace the mass P(I_T < i) is negligible
            let i0 = self.nodes[0].0;
            return match self.lower_tail {
                Some(zh) => self.alpha_solve(m, zh, i0),
                None => i0,
            };
        }
        if k >= self.nodes.len() {
            return self.nodes[self.nodes.len() - 1].0;
        }
        self.alpha_solve(m, self.nodes[k - 1].0, self.nodes[k].0)
    }

    fn alpha_solve(&self, m: f64, lo: f64, hi: f64) -> f64 {
        let pm = self.ctx.pt(m);
        let e = |i: f64, side: Side| self.ctx.f2(&self.ctx.pt(i), &pm, Side::Right) - self.ctx.f1(&self.ctx.pt(i), &pm, side);
        if e(lo, Side::Right) >= 0.0 {
            return lo;
        }
        let kinks = self.ctx.payoff.kinks_in(lo, hi);
        match sign_changes(e, &[lo, hi], &kinks, Crossing::Up, self.cfg.xtol * hi.abs().max(1.0)) {
            Ok(v) if !v.is_empty() => v[0].x,
            _ => hi,
        }
    }

    /// `f₁(i) = F₁^{β(i)}(i)`; on the mirrored tail `g − g'φ/φ'`.
    pub fn f1_at(&self, i: f64) -> f64 {
        let b = self.beta_at(i);
        self.f1_given(i, b)
    }

    fn f1_given(&self, i: f64, b: f64) -> f64 {
        let pi = self.ctx.pt(i);
        if b >= self.spec.interval().1 {
            return pi.g - pi.dg_r * pi.phi / pi.dphi;
        }
        self.ctx.f1(&pi, &self.ctx.pt(b), Side::Right)
    }

    /// `f₂(m) = F₂^{α(m)}(m)`; beyond `ζ` the one-sided `f̂`.
    pub fn f2_at(&self, m: f64) -> f64 {
        if m >= self.zeta {
            return f_hat(&self.ctx.payoff, &self.ctx.pair, m, Side::Right);
        }
        let a = self.alpha_at(m);
        self.ctx.f2(&self.ctx.pt(a), &self.ctx.pt(m), Side::Right)
    }

    /// `f = f₁` below `z*`, `f₂` above `y*`, 0 between.
    pub fn representation(&self, x: f64) -> f64 {
        if x <= self.z_star {
            self.f1_at(x)
        } else if x >= self.y_star {
            self.f2_at(x)
        } else {
            0.0
        }
    }

    /// Like [`representation`](Self::representation) but read off the
    /// tabulated curves: cheap enough for per-step use in simulation.
    pub fn representation_tabulated(&self, x: f64) -> f64 {
        if x <= self.z_star {
            if self.lower_tail.is_some_and(|zh| x <= zh) {
                return self.f1_given(x, self.spec.interval().1);
            }
            self.f1.eval(x)
        } else if x >= self.y_star {
            if x >= self.zeta {
                f_hat(&self.ctx.payoff, &self.ctx.pair, x, Side::Right)
            } else {
                self.f2.eval(x)
            }
        } else {
            0.0
        }
    }

    /// Lower integration cut for a start at `x`.
    fn i_cut(&self, x: f64) -> f64 {
        self.solver().i_cut(x)
    }
}

/// `b`, or a finite stand-in when `ψ` overflows before it.
fn upper_limit(rep: &RepresentationTwoSided) -> f64 {
    let map = rep.spec.unit_map(rep.spec.reference_point());
    let t = 1.0 - 1e-12;
    let top = finite_upper(&rep.ctx.pair, &map, t);
    if top >= map.from_unit(t) { rep.spec.interval().1 } else { top }
}

/// `J(x)` for the two-sided representation, by quadrature against the
/// densities of `(I_T, M_T)`.
pub fn j_value_two_sided(rep: &RepresentationTwoSided, x: f64) -> Result<f64> {
    Ok(j_values_two_sided(rep, &[x])?[0])
}

/// Integrates the pair `(w, w·q)` of kernels over consecutive segments,
/// sharing kernel evaluations between the two quadratures.
fn paired_segments<K: Fn(f64) -> (f64, f64)>(kernel: K, cuts: &[f64], breaks: &[f64], opts: &QuadOpts) -> Result<Vec<(f64, f64)>> {
    let memo: RefCell<HashMap<u64, (f64, f64)>> = RefCell::new(HashMap::new());
    let eval = |t: f64| -> (f64, f64) {
        if let Some(&v) = memo.borrow().get(&t.to_bits()) {
            return v;
        }
        let v = kernel(t);
        memo.borrow_mut().insert(t.to_bits(), v);
        v
    };
    cuts.windows(2)
        .map(|w| {
            if w[1] <= w[0] {
                return Ok((0.0, 0.0));
            }
            let br: Vec<f64> = breaks.iter().copied().filter(|&t| t > w[0] && t < w[1]).collect();
            let p = integrate(|t| eval(t).0, w[0], w[1], &br, opts)?;
            let q = integrate(|t| eval(t).1, w[0], w[1], &br, opts)?;
            memo.borrow_mut().clear();
            Ok((p, q))
        })
        .collect()
}

/// Sorted, deduplicated copy.
fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `J` at many points at once. Both densities factor as
/// `φ(x)·w − ψ(x)·w·q` (lower) and `ψ(x)·w − φ(x)·w·q` (upper), so the
/// integrals are accumulated once along each axis and shared by all `x`.
pub fn j_values_two_sided(rep: &RepresentationTwoSided, xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let ctx = &rep.ctx;
    let pair = &ctx.pair;
    let (a, b) = rep.spec.interval();
    let (z, y, zeta) = (rep.z_star, rep.y_star, rep.zeta);
    for &x in xs {
        if !rep.spec.contains(x) {
            return Err(Error::DomainError(format!("{x} outside {:?}", (a, b))));
        }
    }
    let opts = QuadOpts { abs_tol: 1e-13, rel_tol: 1e-10, max_intervals: 4000 };
    let s = rep.solver();
    let kinks = ctx.payoff.kinks().to_vec();
    let top = upper_limit(rep);
    let bw = ctx.b();

    // --- f₁ against P(I ∈ di, M < β(i)) ---
    let lower_hi = |x: f64| -> Option<f64> {
        if x <= z {
            Some(x)
        } else if x < y {
            Some(z)
        } else if x < zeta {
            Some(rep.alpha_at(x))
        } else {
            None
        }
    };
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut i_lo = rep.i_cut(xmin.min(z));
    if let Some(zh) = rep.lower_tail {
        i_lo = i_lo.max(zh);
    }
    let his: Vec<Option<f64>> = xs.iter().map(|&x| lower_hi(x)).collect();
    let mut cuts = vec![i_lo];
    cuts.extend(his.iter().flatten().copied().filter(|&u| u > i_lo));
    let cuts = sorted(cuts);
    let mut ibreaks = kinks.clone();
    ibreaks.extend(rep.nodes.iter().map(|p| p.0));
    let lower_kernel = |i: f64| {
        let bi = rep.beta_with(&s, i);
        let (pi, pb) = (ctx.pt(i), ctx.pt(bi));
        let (ph, dph) = Ctx::phi_hat_n(&pb, &pi);
        let w = ctx.f1(&pi, &pb, Side::Right) * (-bw / pb.psi * pi.sp - dph) / (ph * ph);
        (w, w * pb.phi / pb.psi)
    };
    let segs = paired_segments(lower_kernel, &cuts, &ibreaks, &opts)?;
    let mut cum = vec![(0.0, 0.0)];
    for s in &segs {
        let last = *cum.last().expect("non-empty");
        cum.push((last.0 + s.0, last.1 + s.1));
    }
    let lower_at = |u: f64| -> (f64, f64) {
        let k = cuts.partition_point(|&c| c < u);
        if k < cuts.len() && cuts[k] == u { cum[k] } else { (0.0, 0.0) }
    };

    // --- f₂ against P(I > α(m), M ∈ dm) on [m_lo, ζ) ---
    let m_end = zeta.min(top);
    let upper_lo = |x: f64| -> Option<f64> {
        let lo = if x <= z {
            rep.beta_with(&s, x)
        } else if x < y {
            y
        } else if x < zeta {
            x
        } else {
            return None;
        };
        Some(lo.min(m_end))
    };
    let los: Vec<Option<f64>> = xs.iter().map(|&x| upper_lo(x)).collect();
    let mut ucuts: Vec<f64> = los.iter().flatten().copied().collect();
    ucuts.push(m_end);
    let ucuts = sorted(ucuts);
    let mut mbreaks = kinks.clone();
    mbreaks.extend(rep.nodes.iter().map(|p| p.1));
    let upper_kernel = |m: f64| {
        let al = rep.alpha_at(m);
        let (pa, pm) = (ctx.pt(al), ctx.pt(m));
        let (ps, dps) = Ctx::psi_hat_n(&pa, &pm);
        let w = ctx.f2(&pa, &pm, Side::Right) * (-bw / pa.phi * pm.sp + dps) / (ps * ps);
        (w, w * pa.psi / pa.phi)
    };
    let usegs = paired_segments(upper_kernel, &ucuts, &mbreaks, &opts)?;
    let mut ucum = vec![(0.0, 0.0); ucuts.len()];
    for k in (0..usegs.len()).rev() {
        ucum[k] = (ucum[k + 1].0 + usegs[k].0, ucum[k + 1].1 + usegs[k].1);
    }
    let upper_at = |u: f64| -> (f64, f64) {
        let k = ucuts.partition_point(|&c| c < u);
        if k < ucuts.len() && ucuts[k] == u { ucum[k] } else { (0.0, 0.0) }
    };

    // --- beyond ζ: the one-sided formula ---
    let far: Vec<f64> = xs.iter().copied().filter(|&x| x >= zeta && zeta < b).collect();
    let mut fcuts = far.clone();
    fcuts.push(top.max(far.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    let fcuts = if far.is_empty() { Vec::new() } else { sorted(fcuts) };
    let mut fcum = vec![0.0; fcuts.len()];
    if !fcuts.is_empty() {
        let f = |m: f64| {
            let p = pair.psi(m);
            f_hat(&ctx.payoff, pair, m, Side::Right) * pair.psi_prime(m) / (p * p)
        };
        for k in (0..fcuts.len() - 1).rev() {
            let br: Vec<f64> = kinks.iter().copied().filter(|&t| t > fcuts[k] && t < fcuts[k + 1]).collect();
            fcum[k] = fcum[k + 1] + integrate(f, fcuts[k], fcuts[k + 1], &br, &opts)?;
        }
    }

    let mut out = Vec::with_capacity(xs.len());
    for (k, &x) in xs.iter().enumerate() {
        let (psi_x, phi_x) = (pair.psi(x), pair.phi(x));
        if x >= zeta && zeta < b {
            let j = fcuts.partition_point(|&c| c < x);
            out.push(psi_x * fcum[j]);
            continue;
        }
        let mut v = 0.0;
        if let Some(u) = his[k] {
            if let Some(zh) = rep.lower_tail {
                let t = zh.min(u);
                v += phi_x * ctx.payoff.value(t) / pair.phi(t);
            }
            if u > i_lo {
                let (p, q) = lower_at(u);
                v += phi_x * p - psi_x * q;
            }
        }
        if let Some(l) = los[k] {
            let (p, q) = upper_at(l);
            v += psi_x * p - phi_x * q;
        }
        if zeta < b {
            v += psi_x * ctx.payoff.value(zeta) / pair.psi(zeta);
        }
        out.push(v);
    }
    Ok(out)
}

/// Settings for [`stopping_signal`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// Coarse grid size for the multistart.
    pub coarse: usize,
    /// Number of local refinements.
    pub starts: usize,
    pub xtol: f64,
    /// Local minima closer than this (relative) count as agreeing.
    pub agree_tol: f64,
    pub unit_margin: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig { coarse: 60, starts: 3, xtol: 1e-10, agree_tol: 1e-8, unit_margin: 1e-6 }
    }
}

/// `γ(x)` with its four branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingSignal {
    pub x: f64,
    pub gamma: f64,
    /// `g − g'ψ/ψ'`.
    pub lower_end: f64,
    /// `inf_{z<x} h₂(x, z)` and its minimiser.
    pub lower_inf: (f64, f64),
    /// `inf_{y>x} h₁(x, y)` and its minimiser.
    pub upper_inf: (f64, f64),
    /// `g − g'φ/φ'`.
    pub upper_end: f64,
    pub warning: Option<String>,
}

fn multistart<F: Fn(f64) -> f64>(f: F, grid: &[f64], starts: usize, xtol: f64) -> (f64, f64, f64) {
    let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let mut idx: Vec<usize> = (0..grid.len()).filter(|&k| vals[k].is_finite()).collect();
    idx.sort_by(|&p, &q| vals[p].total_cmp(&vals[q]));
    let mut best = (f64::NAN, f64::INFINITY);
    let mut minima = Vec::new();
    for &k in idx.iter().take(starts.max(1)) {
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        let (xm, fm) = golden_min(&f, lo, hi, xtol * grid[k].abs().max(1.0));
        let (xm, fm) = if fm <= vals[k] { (xm, fm) } else { (grid[k], vals[k]) };
        minima.push(fm);
        if fm < best.1 {
            best = (xm, fm);
        }
    }
    let spread = minima.iter().fold(0.0f64, |s, &m| s.max((m - best.1).abs()));
    (best.0, best.1, spread)
}

/// The optimal stopping signal `γ(x)`; the stopping set is `{γ ≥ 0}`.
pub fn stopping_signal(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    x: f64,
    cfg: &SignalConfig,
) -> Result<StoppingSignal> {
    if !spec.contains(x) {
        return Err(Error::DomainError(format!("{x} outside {:?}", spec.interval())));
    }
    let ctx = Ctx { payoff: payoff.clone(), pair: pair.clone() };
    let px = ctx.pt(x);
    let lower_end = px.g - px.dg_r * px.psi / px.dpsi;
    let upper_end = px.g - px.dg_r * px.phi / px.dphi;
    let limit = -generator_at(payoff, spec, x, Side::Right) / spec.r();

    let map = spec.unit_map(x);
    let tx = map.to_unit(x);
    // the closed forms cancel as the ends meet; the meeting limit is added exactly
    let gap = 1e-4 * tx.min(1.0 - tx);
    let n = cfg.coarse.max(8);
    let zs: Vec<f64> = (0..n)
        .map(|k| map.from_unit(cfg.unit_margin + (tx - gap - cfg.unit_margin) * k as f64 / (n - 1) as f64))
        .collect();
    let ys: Vec<f64> = (0..n)
        .map(|k| map.from_unit(tx + gap + (1.0 - cfg.unit_margin - tx - gap) * k as f64 / (n - 1) as f64))
        .collect();
    let h2 = |z: f64| ctx.f2(&ctx.pt(z), &px, Side::Right);
    let h1 = |y: f64| ctx.f1(&px, &ctx.pt(y), Side::Right);
    let (zl, vl, sl) = multistart(h2, &zs, cfg.starts, cfg.xtol);
    let (yu, vu, su) = multistart(h1, &ys, cfg.starts, cfg.xtol);
    let lower_inf = if limit < vl { (x, limit) } else { (zl, vl) };
    let upper_inf = if limit < vu { (x, limit) } else { (yu, vu) };
    let gamma = lower_end.min(lower_inf.1).min(upper_inf.1).min(upper_end);
    let scale = gamma.abs().max(1.0);
    let warning = (sl.max(su) > cfg.agree_tol * scale)
        .then(|| format!("multistart minima disagree by {:e}", sl.max(su)));
    Ok(StoppingSignal { x, gamma, lower_end, lower_inf, upper_inf, upper_end, warning })
}

/// Agreement of the two-sided tail with the one-sided `f̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    /// `max |f₂ − f̂|` over `[ζ, b)`; zero by construction.
    pub tail_deviation: f64,
    /// `max |F₂^{z}(m) − f̂(m)|` over the stopping region with `z` pinned near `a`.
    pub pinned_deviation: f64,
    pub pinned_z: f64,
}

/// `max |F₂^{z_pin}(m) − f̂(m)|` over `grid`: the one-sided problem seen
/// through the two-sided formulas with the lower boundary pushed to `a`.
pub fn pinned_limit_deviation(payoff: &Payoff, pair: &FundamentalPair, z_pin: f64, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&m| (upper_ratio(payoff, pair, z_pin, m, Side::Right) - f_hat(payoff, pair, m, Side::Right)).abs())
        .fold(0.0, f64::max)
}

/// Compares the two-sided tail with the one-sided representation.
pub fn one_sided_limit_check(rep: &RepresentationTwoSided) -> LimitReport {
    let (payoff, pair) = (&rep.ctx.payoff, &rep.ctx.pair);
    let map = rep.spec.unit_map(rep.spec.reference_point());
    let b = rep.spec.interval().1;
    let lo = if rep.zeta < b { rep.zeta } else { rep.y_star };
    let tl = map.to_unit(lo);
    let top = map.to_unit(finite_upper(pair, &map, 0.999));
    let grid: Vec<f64> = (0..50).map(|k| map.from_unit(tl + (top - tl) * k as f64 / 49.0).max(lo)).collect();
    let tail_deviation = if rep.zeta < b {
        grid.iter().map(|&m| (rep.f2_at(m) - f_hat(payoff, pair, m, Side::Right)).abs()).fold(0.0, f64::max)
    } else {
        0.0
    };
    let pinned_z = map.from_unit(1e-6);
    LimitReport { tail_deviation, pinned_deviation: pinned_limit_deviation(payoff, pair, pinned_z, &grid), pinned_z }
}
