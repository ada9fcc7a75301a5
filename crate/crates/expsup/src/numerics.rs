//! Quadrature, root finding and the small amount of one-dimensional
//! optimisation the solvers need.
//!
//! The quadrature is a globally adaptive 21-point Gauss–Kronrod rule. It
//! splits at user supplied break points (payoff kinks) and maps infinite
//! ranges onto `[0, 1)` with `x = c + s·t/(1−t)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which one-sided limit to take at a kink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { abs_tol: 1e-10, rel_tol: 1e-9, max_intervals: 4000 }
    }
}

impl QuadOpts {
    pub fn tight() -> Self {
        QuadOpts { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Clone, Copy, Debug)]
enum Map {
    Finite,
    Upper { c: f64, s: f64 },
    Lower { c: f64, s: f64 },
}

impl Map {
    #[inline]
    fn apply(&self, t: f64) -> (f64, f64) {
        match *self {
            Map::Finite => (t, 1.0),
            Map::Upper { c, s } => {
                let q = 1.0 - t;
                (c + s * t / q, s / (q * q))
            }
            Map::Lower { c, s } => {
                let q = 1.0 - t;
                (c - s * t / q, s / (q * q))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    lo: f64,
    hi: f64,
    map: Map,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, map: Map) -> Result<(f64, f64, f64)> {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |t: f64| -> Result<f64> {
        let (x, jac) = map.apply(t);
        let v = f(x) * jac;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::QuadratureFailure {
                lo,
                hi,
                reason: format!("non-finite integrand at x={x}"),
            })
        }
    };
    let fc = eval(centre)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((value, err, res_abs))
}

/// Integrates `f` over `[a, b]`, splitting at every break point inside the
/// range. Either end may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOpts) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, breaks, opts).map(|v| -v);
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|p| p.is_finite() && *p > a && *p < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if a == f64::NEG_INFINITY && b == f64::INFINITY && pts.is_empty() {
        pts.push(0.0);
    }
    let mut edges = Vec::with_capacity(pts.len() + 2);
    edges.push(a);
    edges.extend(pts);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (map, tlo, thi) = if hi == f64::INFINITY {
            (Map::Upper { c: lo, s: lo.abs().max(1.0) }, 0.0, 1.0)
        } else if lo == f64::NEG_INFINITY {
            // integrate from hi downwards, so the orientation flips
            (Map::Lower { c: hi, s: hi.abs().max(1.0) }, 0.0, 1.0)
        } else {
            (Map::Finite, lo, hi)
        };
        let (v, e, ab) = kronrod(&f, tlo, thi, map)?;
        total += v;
        total_err += e;
        total_abs += ab;
        heap.push(Piece { lo: tlo, hi: thi, map, value: v, err: e });
    }

    let mut count = heap.len();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs()).max(100.0 * f64::EPSILON * total_abs);
        if total_err <= tol {
            return Ok(total);
        }
        if count >= opts.max_intervals {
            return Err(Error::QuadratureFailure {
                lo: a,
                hi: b,
                reason: format!("subdivision limit reached (estimate {total:e}, error {total_err:e})"),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            return Err(Error::QuadratureFailure {
                lo: a,
                hi: b,
                reason: format!("interval collapsed near t={mid} (error {total_err:e})"),
            });
        }
        let (v1, e1, ab1) = kronrod(&f, worst.lo, mid, worst.map)?;
        let (v2, e2, ab2) = kronrod(&f, mid, worst.hi, worst.map)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        total_abs += ab1 + ab2;
        heap.push(Piece { lo: worst.lo, hi: mid, map: worst.map, value: v1, err: e1 });
        heap.push(Piece { lo: mid, hi: worst.hi, map: worst.map, value: v2, err: e2 });
        count += 1;
    }
}

/// Brent's root finder on a bracket whose end values are already known.
pub fn brent_known<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    flo: f64,
    hi: f64,
    fhi: f64,
    xtol: f64,
) -> Result<f64> {
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(Error::NoRoot(format!("[{lo}, {hi}] does not bracket a root ({flo:e}, {fhi:e})")));
    }
    let (mut a, mut fa, mut b, mut fb) = (lo, flo, hi, fhi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::NoRoot(format!("function is NaN at {b}")));
        }
    }
    Err(Error::NoRoot(format!("Brent iteration limit on [{lo}, {hi}]")))
}

/// Brent's root finder on `[lo, hi]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    brent_known(f, lo, flo, hi, fhi, xtol)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
/// Returns `(argmin, min)`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol.max(4.0 * f64::EPSILON * c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Direction of a sign change, reading left to right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    /// From negative to non-negative.
    Up,
    /// From positive to non-positive.
    Down,
}

/// A located sign change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignChange {
    pub x: f64,
    /// The change happens as a jump across a kink rather than as a zero.
    pub at_kink: bool,
}

/// Finds every sign change of `f` of the requested direction along `nodes`,
/// treating each kink as a point where `f` may jump. `f(x, side)` must return
/// one-sided values; away from kinks the side is ignored. Zeros inside a
/// smooth cell are polished with Brent to `xtol`.
pub fn sign_changes<F: FnMut(f64, Side) -> f64>(
    mut f: F,
    nodes: &[f64],
    kinks: &[f64],
    dir: Crossing,
    xtol: f64,
) -> Result<Vec<SignChange>> {
    let flip = if dir == Crossing::Up { 1.0 } else { -1.0 };
    let (lo, hi) = match (nodes.first(), nodes.last()) {
        (Some(&l), Some(&h)) => (l, h),
        _ => return Ok(Vec::new()),
    };
    let mut pts: Vec<(f64, bool)> = nodes.iter().map(|&x| (x, false)).collect();
    pts.extend(kinks.iter().filter(|&&k| k > lo && k < hi).map(|&k| (k, true)));
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    pts.dedup_by(|q, p| {
        if q.0 == p.0 {
            p.1 |= q.1;
            true
        } else {
            false
        }
    });

    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (x, kink) in pts {
        let (vl, vr) = if kink {
            (flip * f(x, Side::Left), flip * f(x, Side::Right))
        } else {
            let v = flip * f(x, Side::Right);
            (v, v)
        };
        if let Some((px, pv)) = prev {
            if pv < 0.0 && vl >= 0.0 {
                let root = if vl == 0.0 {
                    x
                } else {
                    brent_known(|t| flip * f(t, Side::Right), px, pv, x, vl, xtol)?
                };
                out.push(SignChange { x: root, at_kink: false });
            } else if kink && vl < 0.0 && vr >= 0.0 {
                out.push(SignChange { x, at_kink: true });
            }
        }
        prev = Some((x, vr));
    }
    Ok(out)
}

/// Maps an interval `(a, b)`, possibly infinite, onto `(0, 1)` so that
/// uniform grids in the unit coordinate spread sensibly over the state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitMap {
    a: f64,
    b: f64,
    anchor: f64,
    scale: f64,
}

impl UnitMap {
    /// `anchor` is sent to 1/2 when at least one end is infinite.
    pub fn new(a: f64, b: f64, anchor: f64) -> Self {
        let scale = match (a.is_finite(), b.is_finite()) {
            (true, false) => anchor - a,
            (false, true) => b - anchor,
            (false, false) => anchor.abs().max(1.0),
            (true, true) => b - a,
        };
        UnitMap { a, b, anchor, scale }
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        match (self.a.is_finite(), self.b.is_finite()) {
            (true, true) => (x - self.a) / self.scale,
            (true, false) => {
                let d = x - self.a;
                d / (d + self.scale)
            }
            (false, true) => {
                let d = self.b - x;
                1.0 - d / (d + self.scale)
            }
            (false, false) => {
                let d = x - self.anchor;
                0.5 + 0.5 * d / (d.abs() + self.scale)
            }
        }
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        match (self.a.is_finite(), self.b.is_finite()) {
            (true, true) => self.a + t * self.scale,
            (true, false) => self.a + self.scale * t / (1.0 - t),
            (false, true) => self.b - self.scale * (1.0 - t) / t,
            (false, false) => {
                let u = 2.0 * t - 1.0;
                self.anchor + self.scale * u / (1.0 - u.abs())
            }
        }
    }

    /// `n` points uniformly spaced in the unit coordinate on `[lo, hi]`.
    pub fn grid(&self, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let (tl, th) = (self.to_unit(lo), self.to_unit(hi));
        let n = n.max(2);
        (0..n)
            .map(|k| {
                if k == 0 {
                    lo
                } else if k == n - 1 {
                    hi
                } else {
                    self.from_unit(tl + (th - tl) * k as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// `n` points spaced evenly in `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Deterministic pairwise summation; independent of thread scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        for k in 0..20 {
            let v = integrate(|x| x.powi(k), 0.0, 1.0, &[], &QuadOpts::tight()).unwrap();
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}: {v}");
        }
    }

    #[test]
    fn infinite_ranges() {
        let o = QuadOpts::tight();
        let v = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, &[], &o).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate(|x| (-x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, &[], &o).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let v = integrate(|x| 1.0 / (x * x), 2.0, f64::INFINITY, &[], &o).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let v = integrate(|x| x.exp(), f64::NEG_INFINITY, 1.0, &[], &o).unwrap();
        assert!((v - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn kinks_and_reversal() {
        let o = QuadOpts::tight();
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], &o).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
        let w = integrate(|x: f64| (x - 0.3).abs(), 1.0, 0.0, &[0.3], &o).unwrap();
        assert_eq!(v, -w);
    }

    #[test]
    fn divergence_is_reported() {
        let r = integrate(|x| 1.0 / x, 1.0, f64::INFINITY, &[], &QuadOpts::default());
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn brent_and_golden() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(brent(|x| x * x + 1.0, 0.0, 2.0, 1e-12).is_err());
        let (x, v) = golden_min(|x| (x - 1.3).powi(2) + 0.5, 0.0, 3.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-7 && (v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sign_changes_see_jumps() {
        // up at 1, down at 1.8, jump up across the kink at 2, down at 3
        let f = |x: f64, s: Side| {
            if x < 2.0 || (x == 2.0 && s == Side::Left) {
                (x - 1.0) * (1.8 - x)
            } else {
                3.0 - x
            }
        };
        let nodes = linspace(0.0, 4.0, 9);
        let up = sign_changes(f, &nodes, &[2.0], Crossing::Up, 1e-12).unwrap();
        assert_eq!(up.len(), 2);
        assert!((up[0].x - 1.0).abs() < 1e-12 && !up[0].at_kink);
        assert!(up[1].at_kink && up[1].x == 2.0);
        let down = sign_changes(f, &nodes, &[2.0], Crossing::Down, 1e-12).unwrap();
        assert_eq!(down.len(), 2);
        assert!((down[0].x - 1.8).abs() < 1e-12);
        assert!((down[1].x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_map_round_trips() {
        for m in [
            UnitMap::new(0.0, f64::INFINITY, 1.0),
            UnitMap::new(f64::NEG_INFINITY, f64::INFINITY, 0.0),
            UnitMap::new(-1.0, 2.0, 0.0),
            UnitMap::new(f64::NEG_INFINITY, 3.0, 1.0),
        ] {
            for t in [0.01, 0.3, 0.5, 0.77, 0.99] {
                let x = m.from_unit(t);
                assert!((m.to_unit(x) - t).abs() < 1e-12);
            }
        }
        assert_eq!(UnitMap::new(0.0, f64::INFINITY, 1.0).from_unit(0.5), 1.0);
    }

    #[test]
    fn pairwise_sum_matches() {
        let v: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
