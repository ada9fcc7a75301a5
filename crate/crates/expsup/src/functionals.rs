//! Payoffs and the functionals built on them: the killed generator
//! `𝒢_r g`, `L_u g`, the ratio `R(z, y)` and the resolvent `R_r π`.
//!
//! Payoffs may have finitely many kinks. At a kink the generator is a
//! measure with an atom `½σ²(g'(k+) − g'(k−))`; integrated against `u·m'` it
//! contributes `(g'(k+) − g'(k−))u(k)/S'(k)`. Every integral in this module
//! that crosses a kink includes that atom, so that
//! `(L_u g)(z+) − (L_u g)(y−) = ∫_z^y (𝒢_r g) u m'` holds with kinks too.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::Direction;
use crate::diffusion::{DiffusionSpec, RealFn};
use crate::error::{Error, Result};
use crate::fundamental::FundamentalPair;
use crate::numerics::{brent, golden_min, integrate, QuadOpts, Side};

type SidedFn = Arc<dyn Fn(f64, Side) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Call,
    CappedCall,
    Straddle,
    CappedStraddle,
    MaxWithFloor,
    Resolvent,
    Custom,
}

/// An exercise payoff with a finite kink set.
#[derive(Clone)]
pub struct Payoff {
    g: RealFn,
    dg: SidedFn,
    d2g: SidedFn,
    kinks: Vec<f64>,
    kind: PayoffKind,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff").field("kind", &self.kind).field("kinks", &self.kinks).finish()
    }
}

impl Payoff {
    /// A payoff from explicit pieces. `dg` and `d2g` receive the side to use
    /// at kinks and may ignore it elsewhere.
    pub fn custom(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64, Side) -> f64 + Send + Sync + 'static,
        d2g: impl Fn(f64, Side) -> f64 + Send + Sync + 'static,
        kinks: Vec<f64>,
    ) -> Self {
        let mut kinks = kinks;
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        Payoff { g: Arc::new(g), dg: Arc::new(dg), d2g: Arc::new(d2g), kinks, kind: PayoffKind::Custom }
    }

    /// Continuous piecewise-linear payoff through `knots`, extended with the
    /// given slopes outside them. Every knot is a kink.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>, left_slope: f64, right_slope: f64) -> Result<Self> {
        let mut knots = knots;
        knots.sort_by(|p, q| p.0.total_cmp(&q.0));
        if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::ParamError("knots must be non-empty with distinct abscissae".into()));
        }
        if knots.iter().any(|k| !k.0.is_finite() || !k.1.is_finite()) {
            return Err(Error::ParamError("knots must be finite".into()));
        }
        let mut slopes = vec![left_slope];
        slopes.extend(knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)));
        slopes.push(right_slope);
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        // slopes[j] applies on (xs[j-1], xs[j])
        let (xs1, ys1, sl1) = (xs.clone(), ys.clone(), slopes.clone());
        let g = move |x: f64| {
            let j = xs1.partition_point(|&t| t <= x);
            if j == 0 {
                ys1[0] + sl1[0] * (x - xs1[0])
            } else {
                ys1[j - 1] + sl1[j] * (x - xs1[j - 1])
            }
        };
        let xs2 = xs.clone();
        let dg = move |x: f64, side: Side| {
            let j = match side {
                Side::Right => xs2.partition_point(|&t| t <= x),
                Side::Left => xs2.partition_point(|&t| t < x),
            };
            slopes[j]
        };
        let mut p = Payoff::custom(g, dg, |_, _| 0.0, xs);
        // a knot where the slope does not change is not a kink
        let probe = p.clone();
        p.kinks.retain(|&k| probe.derivative(k, Side::Left) != probe.derivative(k, Side::Right));
        Ok(p)
    }

    /// `g(x) = x − K`.
    pub fn call(k: f64) -> Self {
        let mut p = Payoff::custom(move |x| x - k, |_, _| 1.0, |_, _| 0.0, Vec::new());
        p.kind = PayoffKind::Call;
        p
    }

    /// `g(x) = min((x − K)⁺, C)`.
    pub fn capped_call(k: f64, c: f64) -> Result<Self> {
        positive(&[("cap", c)])?;
        Self::piecewise_linear(vec![(k, 0.0), (k + c, c)], 0.0, 0.0).map(|p| p.with_kind(PayoffKind::CappedCall))
    }

    /// `g(x) = |x − K|`.
    pub fn straddle(k: f64) -> Result<Self> {
        Self::piecewise_linear(vec![(k, 0.0)], -1.0, 1.0).map(|p| p.with_kind(PayoffKind::Straddle))
    }

    /// `g(x) = min(|x − K|, C)`.
    pub fn capped_straddle(k: f64, c: f64) -> Result<Self> {
        Self::asym_capped_straddle(c, k, c).map(|p| p.with_kind(PayoffKind::CappedStraddle))
    }

    /// `g(x) = min((K − x)⁺, C₁) + min((x − K)⁺, C₂)`.
    pub fn asym_capped_straddle(c1: f64, k: f64, c2: f64) -> Result<Self> {
        positive(&[("C1", c1), ("C2", c2)])?;
        Self::piecewise_linear(vec![(k - c1, c1), (k, 0.0), (k + c2, c2)], 0.0, 0.0)
            .map(|p| p.with_kind(PayoffKind::CappedStraddle))
    }

    /// `g(x) = max(x, c)`, the minimum guaranteed payment.
    pub fn max_with_floor(c: f64) -> Self {
        Self::piecewise_linear(vec![(c, c)], 0.0, 1.0)
            .expect("a single finite knot is valid")
            .with_kind(PayoffKind::MaxWithFloor)
    }

    /// `g = R_r π`, the expected discounted flow of `π`. Values come from the
    /// Green kernel; `g''` uses the kernel too (not the ODE `𝒢_r g = −π`), so
    /// the generator of this payoff is an honest check of the quadratures.
    pub fn resolvent(pi: RealFn, pair: &FundamentalPair, spec: &DiffusionSpec) -> Result<Self> {
        let cache = Arc::new(GreenCache::build(pi, pair, spec)?);
        let (c1, c2, c3) = (cache.clone(), cache.clone(), cache);
        let mut p = Payoff::custom(
            move |x| c1.eval(x).0,
            move |x, _| c2.eval(x).1,
            move |x, _| c3.eval(x).2,
            Vec::new(),
        );
        p.kind = PayoffKind::Resolvent;
        Ok(p)
    }

    /// `c·g`.
    pub fn scaled(&self, c: f64) -> Self {
        let (g, dg, d2g) = (self.g.clone(), self.dg.clone(), self.d2g.clone());
        Payoff {
            g: Arc::new(move |x| c * g(x)),
            dg: Arc::new(move |x, s| c * dg(x, s)),
            d2g: Arc::new(move |x, s| c * d2g(x, s)),
            kinks: self.kinks.clone(),
            kind: self.kind,
        }
    }

    fn with_kind(mut self, kind: PayoffKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn derivative(&self, x: f64, side: Side) -> f64 {
        (self.dg)(x, side)
    }

    pub fn second_derivative(&self, x: f64, side: Side) -> f64 {
        (self.d2g)(x, side)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    /// Kinks strictly inside `(lo, hi)`.
    pub fn kinks_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.kinks.iter().copied().filter(|&k| k > lo && k < hi).collect()
    }

    pub fn is_kink(&self, x: f64) -> bool {
        self.kinks.contains(&x)
    }

    /// `g'(k+) − g'(k−)`.
    pub fn derivative_jump(&self, k: f64) -> f64 {
        self.derivative(k, Side::Right) - self.derivative(k, Side::Left)
    }

    /// Largest `|g(k−) − g(k+)|` over the kinks, probing at relative offset `h`.
    pub fn continuity_defect(&self, h: f64) -> f64 {
        self.kinks
            .iter()
            .map(|&k| {
                let d = h * k.abs().max(1.0);
                let left = self.value(k - d) + d * self.derivative(k - d, Side::Left);
                let right = self.value(k + d) - d * self.derivative(k + d, Side::Right);
                (left - right).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn positive(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::ParamError(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Cumulative Green-kernel integrals `I₁ = ∫_a^x ψπm'`, `I₂ = ∫_x^b φπm'` at
/// fixed nodes, completed by a short quadrature from the nearest node.
struct GreenCache {
    pi: RealFn,
    pair: FundamentalPair,
    spec: DiffusionSpec,
    nodes: Vec<f64>,
    i1: Vec<f64>,
    i2: Vec<f64>,
    opts: QuadOpts,
}

impl GreenCache {
    fn build(pi: RealFn, pair: &FundamentalPair, spec: &DiffusionSpec) -> Result<Self> {
        let (a, b) = spec.interval();
        let opts = QuadOpts { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 };
        let map = spec.unit_map(spec.reference_point());
        let n = 200;
        let mut ts: Vec<f64> = (1..n).map(|k| k as f64 / n as f64).collect();
        // far-tail nodes, so that evaluations deep toward the ends start close by
        for j in 3..=9 {
            let e = 10f64.powi(-j);
            ts.push(e);
            ts.push(1.0 - e);
        }
        ts.sort_by(f64::total_cmp);
        let nodes: Vec<f64> = ts.iter().map(|&t| map.from_unit(t)).collect();
        let lower = |x: f64| pair.psi(x) * pi(x) * pair.m_prime(x);
        let upper = |x: f64| pair.phi(x) * pi(x) * pair.m_prime(x);
        let mut i1 = vec![integrate(lower, a, nodes[0], &[], &opts)?];
        for w in nodes.windows(2) {
            let last = *i1.last().expect("non-empty");
            i1.push(last + integrate(lower, w[0], w[1], &[], &opts)?);
        }
        let mut i2 = vec![0.0; nodes.len()];
        i2[nodes.len() - 1] = integrate(upper, nodes[nodes.len() - 1], b, &[], &opts)?;
        for k in (0..nodes.len() - 1).rev() {
            i2[k] = i2[k + 1] + integrate(upper, nodes[k], nodes[k + 1], &[], &opts)?;
        }
        Ok(GreenCache { pi, pair: pair.clone(), spec: spec.clone(), nodes, i1, i2, opts })
    }

    /// `(g, g', g'')` at `x`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let j = self.nodes.partition_point(|&t| t < x);
        let k = if j == 0 {
            0
        } else if j == self.nodes.len() || x - self.nodes[j - 1] < self.nodes[j] - x {
            j - 1
        } else {
            j
        };
        let (pair, pi) = (&self.pair, &self.pi);
        let from = self.nodes[k];
        let d1 = integrate(|t| pair.psi(t) * pi(t) * pair.m_prime(t), from, x, &[], &self.opts);
        let d2 = integrate(|t| pair.phi(t) * pi(t) * pair.m_prime(t), from, x, &[], &self.opts);
        let (d1, d2) = match (d1, d2) {
            (Ok(p), Ok(q)) => (p, q),
            _ => return (f64::NAN, f64::NAN, f64::NAN),
        };
        let (i1, i2) = (self.i1[k] + d1, self.i2[k] - d2);
        let p = pair.point(x);
        let bw = pair.wronskian();
        let g = (p.phi * i1 + p.psi * i2) / bw;
        let dg = (p.dphi * i1 + p.dpsi * i2) / bw;
        let d2phi = self.spec.harmonic_second_derivative(x, p.phi, p.dphi);
        let d2psi = self.spec.harmonic_second_derivative(x, p.psi, p.dpsi);
        let s = self.spec.sigma(x);
        let d2g = (d2phi * i1 + d2psi * i2) / bw - 2.0 * pi(x) / (s * s);
        (g, dg, d2g)
    }
}

/// `(𝒢_r g)(x)` using one-sided derivatives at kinks.
pub fn generator_at(payoff: &Payoff, spec: &DiffusionSpec, x: f64, side: Side) -> f64 {
    spec.killed_generator(x, payoff.value(x), payoff.derivative(x, side), payoff.second_derivative(x, side))
}

/// The generator atom `½σ²(k)(g'(k+) − g'(k−))` at a kink.
pub fn generator_atom(payoff: &Payoff, spec: &DiffusionSpec, k: f64) -> f64 {
    let s = spec.sigma(k);
    0.5 * s * s * payoff.derivative_jump(k)
}

/// Tabulated generator together with its sign structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    /// `(x, (𝒢_r g)(x))` at grid nodes off the kink set.
    pub values: Vec<(f64, f64)>,
    /// `(k, left limit, right limit, atom)` at every kink in range.
    pub kinks: Vec<(f64, f64, f64, f64)>,
    /// Points where the sign of the generator measure changes, in order. A
    /// positive atom between two negative stretches counts twice.
    pub sign_changes: Vec<f64>,
    /// Location of the largest tabulated value (refined off kinks).
    pub argmax: Option<f64>,
    pub monotone_segments: Vec<((f64, f64), Direction)>,
}

impl GeneratorProfile {
    /// First sign change (`x₀` in the two-sided shape condition).
    pub fn lower_crossing(&self) -> Option<f64> {
        self.sign_changes.first().copied()
    }

    /// Last sign change (`x₁`).
    pub fn upper_crossing(&self) -> Option<f64> {
        self.sign_changes.last().copied()
    }
}

/// Tabulates `𝒢_r g` on `grid`, locating sign changes and the maximiser.
pub fn generator(payoff: &Payoff, spec: &DiffusionSpec, grid: &[f64]) -> Result<GeneratorProfile> {
    let mut grid: Vec<f64> = grid.iter().copied().filter(|&x| spec.contains(x)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 {
        return Err(Error::DomainError("generator grid needs two interior points".into()));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let kinks = payoff.kinks_in(lo, hi);
    let gen = |x: f64| generator_at(payoff, spec, x, Side::Right);

    let values: Vec<(f64, f64)> = grid.iter().filter(|x| !payoff.is_kink(**x)).map(|&x| (x, gen(x))).collect();
    let kink_rows: Vec<(f64, f64, f64, f64)> = kinks
        .iter()
        .map(|&k| {
            (
                k,
                generator_at(payoff, spec, k, Side::Left),
                generator_at(payoff, spec, k, Side::Right),
                generator_atom(payoff, spec, k),
            )
        })
        .collect();

    // Walk the merged sequence of smooth values and kink triples.
    enum Item {
        Node(f64, f64),
        Kink(f64, f64, f64, f64),
    }
    let mut items: Vec<Item> = values.iter().map(|&(x, v)| Item::Node(x, v)).collect();
    items.extend(kink_rows.iter().map(|&(k, l, r, a)| Item::Kink(k, l, r, a)));
    items.sort_by(|p, q| {
        let key = |i: &Item| match *i {
            Item::Node(x, _) | Item::Kink(x, ..) => x,
        };
        key(p).total_cmp(&key(q))
    });

    let sgn = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    let mut changes = Vec::new();
    let mut last: Option<(f64, i32)> = None; // position and sign of the last smooth value
    let push = |at: f64, s: i32, last_sign: &mut i32, changes: &mut Vec<f64>| {
        if s != 0 {
            if *last_sign != 0 && s != *last_sign {
                changes.push(at);
            }
            *last_sign = s;
        }
    };
    let mut cur = 0;
    let mut zero_at: Option<f64> = None;
    for it in &items {
        match *it {
            Item::Node(x, v) => {
                let s = sgn(v);
                if s == 0 {
                    zero_at.get_or_insert(x);
                    continue;
                }
                match last {
                    Some((px, ps)) if ps != s => {
                        let root = match zero_at {
                            Some(z0) => z0,
                            None => brent(gen, px, x, 1e-12 * x.abs().max(1.0)).unwrap_or(0.5 * (px + x)),
                        };
                        push(root, s, &mut cur, &mut changes);
                    }
                    Some((px, ps)) => {
                        // a cell whose midpoint disagrees with both ends hides a pair of roots
                        let ms = sgn(gen(0.5 * (px + x)));
                        if zero_at.is_none() && ms != 0 && ms != ps {
                            return Err(Error::GridTooCoarse { lo: px, hi: x });
                        }
                        push(x, s, &mut cur, &mut changes);
                    }
                    None => push(x, s, &mut cur, &mut changes),
                }
                last = Some((x, s));
                zero_at = None;
            }
            Item::Kink(k, l, r, a) => {
                // a smooth crossing between the last node and the kink
                if let Some((px, ps)) = last {
                    if sgn(l) != 0 && sgn(l) != ps && px < k {
                        let root = match zero_at {
                            Some(z0) => z0,
                            None => {
                                let fl = |t: f64| generator_at(payoff, spec, t, if t >= k { Side::Left } else { Side::Right });
                                brent(fl, px, k, 1e-12 * k.abs().max(1.0)).unwrap_or(k)
                            }
                        };
                        push(root, sgn(l), &mut cur, &mut changes);
                    }
                }
                push(k, sgn(l), &mut cur, &mut changes);
                push(k, sgn(a), &mut cur, &mut changes);
                push(k, sgn(r), &mut cur, &mut changes);
                last = Some((k, if sgn(r) != 0 { sgn(r) } else { cur }));
                zero_at = None;
            }
        }
    }

    // Maximiser: best node, refined by golden section inside a kink-free bracket.
    let argmax = values.iter().enumerate().max_by(|p, q| p.1 .1.total_cmp(&q.1 .1)).map(|(j, &(x, _))| {
        let l = if j > 0 { values[j - 1].0 } else { x };
        let r = if j + 1 < values.len() { values[j + 1].0 } else { x };
        if r > l && payoff.kinks_in(l, r).is_empty() {
            golden_min(|t| -gen(t), l, r, 1e-10 * x.abs().max(1.0)).0
        } else {
            x
        }
    });

    // Monotone segments over the tabulated points, kinks included as two points.
    let mut seq: Vec<(f64, f64)> = Vec::new();
    for it in &items {
        match *it {
            Item::Node(x, v) => seq.push((x, v)),
            Item::Kink(k, l, r, _) => {
                seq.push((k, l));
                seq.push((k, r));
            }
        }
    }
    let mut segments: Vec<((f64, f64), Direction)> = Vec::new();
    for w in seq.windows(2) {
        let d = w[1].1 - w[0].1;
        if d == 0.0 {
            continue;
        }
        let dir = if d > 0.0 { Direction::Increasing } else { Direction::Decreasing };
        match segments.last_mut() {
            Some(((_, end), last_dir)) if *last_dir == dir => *end = w[1].0,
            _ => segments.push(((w[0].0, w[1].0), dir)),
        }
    }

    Ok(GeneratorProfile { values, kinks: kink_rows, sign_changes: changes, argmax, monotone_segments: segments })
}

/// `(L_u g)(x±) = g u'/S' − g' u/S'` with `u = c₁ψ + c₂φ`.
pub fn l_functional(u: (f64, f64), payoff: &Payoff, pair: &FundamentalPair, x: f64, side: Side) -> f64 {
    let p = pair.point(x);
    let uu = u.0 * p.psi + u.1 * p.phi;
    let du = u.0 * p.dpsi + u.1 * p.dphi;
    (payoff.value(x) * du - payoff.derivative(x, side) * uu) / p.sp
}

/// `(L_u 1)(x) = u'(x)/S'(x)`.
pub fn l_unit(u: (f64, f64), pair: &FundamentalPair, x: f64) -> f64 {
    let p = pair.point(x);
    (u.0 * p.dpsi + u.1 * p.dphi) / p.sp
}

/// `∫_z^y (𝒢_r g) w m'` for an arbitrary weight `w`, split at the kinks and
/// including the kink atoms.
pub fn generator_integral<W: Fn(f64) -> f64>(
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    w: W,
    z: f64,
    y: f64,
    opts: &QuadOpts,
) -> Result<f64> {
    if z == y {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if z < y { (z, y, 1.0) } else { (y, z, -1.0) };
    let kinks = payoff.kinks_in(lo, hi);
    let body = integrate(|t| generator_at(payoff, spec, t, Side::Right) * w(t) * pair.m_prime(t), lo, hi, &kinks, opts)?;
    let atoms: f64 = kinks.iter().map(|&k| payoff.derivative_jump(k) * w(k) / pair.s_prime(k)).sum();
    Ok(sign * (body + atoms))
}

/// `(L_u g)(z) − (L_u g)(y)` as the generator integral over `(z, y)`.
pub fn l_increment(
    u: (f64, f64),
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    z: f64,
    y: f64,
) -> Result<f64> {
    let w = |t: f64| u.0 * pair.psi(t) + u.1 * pair.phi(t);
    generator_integral(payoff, pair, spec, w, z, y, &QuadOpts::tight())
}

/// `R(z, y)` computed with `u = ψ`. When `|y − z|` is below `1e-8·max(1,|z|)`
/// the limiting value `−(𝒢_r g)(z)/r` is returned instead.
pub fn ratio_r(payoff: &Payoff, pair: &FundamentalPair, spec: &DiffusionSpec, z: f64, y: f64) -> Result<f64> {
    ratio_r_with((1.0, 0.0), payoff, pair, spec, z, y)
}

/// `R(z, y)` for an arbitrary harmonic `u = c₁ψ + c₂φ`.
pub fn ratio_r_with(
    u: (f64, f64),
    payoff: &Payoff,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    z: f64,
    y: f64,
) -> Result<f64> {
    let (z, y) = if z <= y { (z, y) } else { (y, z) };
    if y - z < 1e-8 * z.abs().max(1.0) {
        return Ok(-generator_at(payoff, spec, z, Side::Right) / spec.r());
    }
    let w = |t: f64| u.0 * pair.psi(t) + u.1 * pair.phi(t);
    let num = generator_integral(payoff, pair, spec, w, z, y, &QuadOpts::tight())?;
    // 𝒢_r 1 = −r
    let den = -spec.r() * integrate(|t| w(t) * pair.m_prime(t), z, y, &[], &QuadOpts::tight())?;
    if den.abs() <= 1e-14 * num.abs().max(f64::MIN_POSITIVE) || den == 0.0 {
        return Err(Error::DegenerateDenominator { z, y });
    }
    Ok(num / den)
}

/// `(R_r π)(x)` by the Green kernel.
pub fn resolvent<P: Fn(f64) -> f64>(pi: P, pair: &FundamentalPair, spec: &DiffusionSpec, x: f64) -> Result<f64> {
    let (a, b) = spec.interval();
    if !spec.contains(x) {
        return Err(Error::DomainError(format!("{x} outside {:?}", (a, b))));
    }
    let opts = QuadOpts::default();
    let i1 = integrate(|t| pair.psi(t) * pi(t) * pair.m_prime(t), a, x, &[], &opts)?;
    let i2 = integrate(|t| pair.phi(t) * pi(t) * pair.m_prime(t), x, b, &[], &opts)?;
    Ok((pair.phi(x) * i1 + pair.psi(x) * i2) / pair.wronskian())
}

/// `π(x) = (x⁵ − 2)e^{−x} + 1`, the flow behind the non-monotone example.
pub fn example_flow() -> RealFn {
    Arc::new(|x: f64| (x.powi(5) - 2.0) * (-x).exp() + 1.0)
}
