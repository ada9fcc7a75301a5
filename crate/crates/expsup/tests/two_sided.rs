use std::sync::OnceLock;

use expsup::diffusion::DiffusionSpec;
use expsup::functionals::{generator_at, Payoff};
use expsup::fundamental::*;
use expsup::numerics::{integrate, QuadOpts, Side};
use expsup::one_sided::f_hat;
use expsup::two_sided::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn gbm(mu: f64, sigma: f64, r: f64) -> (DiffusionSpec, FundamentalPair) {
    (DiffusionSpec::gbm(mu, sigma, r).unwrap(), make_gbm_pair(mu, sigma, r).unwrap())
}

fn testbed() -> (DiffusionSpec, FundamentalPair) {
    gbm(0.15, 0.1f64.sqrt(), 0.4)
}

fn logistic() -> (DiffusionSpec, FundamentalPair) {
    (
        DiffusionSpec::logistic(0.07, 0.5, 0.1, 0.035).unwrap(),
        make_logistic_pair(0.07, 0.5, 0.1, 0.035).unwrap(),
    )
}

fn logistic_rep() -> &'static RepresentationTwoSided {
    static REP: OnceLock<RepresentationTwoSided> = OnceLock::new();
    REP.get_or_init(|| {
        let (spec, pair) = logistic();
        solve_two_sided(&Payoff::max_with_floor(1.0), &pair, &spec, &TwoSidedConfig::default()).unwrap()
    })
}

fn floor_rep() -> &'static RepresentationTwoSided {
    static REP: OnceLock<RepresentationTwoSided> = OnceLock::new();
    REP.get_or_init(|| {
        let (spec, pair) = testbed();
        solve_two_sided(&Payoff::max_with_floor(1.0), &pair, &spec, &TwoSidedConfig::default()).unwrap()
    })
}

fn asym_rep() -> &'static RepresentationTwoSided {
    static REP: OnceLock<RepresentationTwoSided> = OnceLock::new();
    REP.get_or_init(|| {
        let (spec, pair) = testbed();
        let g = Payoff::asym_capped_straddle(1.0, 5.0, 3.0).unwrap();
        solve_two_sided(&g, &pair, &spec, &TwoSidedConfig::default()).unwrap()
    })
}

/// Guo–Shepp thresholds for `x ∨ c` under GBM with exponents `κ±`.
fn floor_thresholds(kp: f64, km: f64, c: f64) -> (f64, f64) {
    let d = kp - km;
    let (p, q) = (kp / (kp - 1.0), (km - 1.0) / km);
    (p.powf((kp - 1.0) / d) * q.powf((km - 1.0) / d) * c, p.powf(kp / d) * q.powf(km / d) * c)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

// ---------- value and H ----------

#[test]
fn two_point_value_formulas() {
    let (_, pair) = testbed();
    let g = Payoff::max_with_floor(1.0);
    let (z, y) = (0.8, 1.4);
    assert_eq!(value_two_sided(&g, &pair, z, y, z).unwrap(), g.value(z));
    assert_eq!(value_two_sided(&g, &pair, z, y, y).unwrap(), g.value(y));
    let v = value_two_sided(&g, &pair, z, y, 1.0).unwrap();
    let (a1, a2) = value_coefficients(&g, &pair, z, y).unwrap();
    assert!(close(v, a1 * pair.phi(1.0) + a2 * pair.psi(1.0), 1e-12));

    let c = Payoff::custom(|_| 2.0, |_, _| 0.0, |_, _| 0.0, vec![]);
    for x in [0.9, 1.1, 1.3] {
        let v = value_two_sided(&c, &pair, z, y, x).unwrap();
        assert!(v < 2.0 && v > 0.0);
    }
    assert!(value_two_sided(&g, &pair, 1.4, 0.8, 1.0).is_err());
}

#[test]
fn h_sign_pattern_on_the_floor_problem() {
    let (spec, pair) = testbed();
    let g = Payoff::max_with_floor(1.0);
    assert_eq!(h_function(&g, &pair, &spec, 0.7, 0.7).unwrap(), 0.0);
    let z = 0.5;
    // g is constant on (z, 1], where H vanishes; just past the kink it turns negative
    for y in [0.6, 0.8, 0.95, 1.0] {
        assert!(h_function(&g, &pair, &spec, z, y).unwrap().abs() < 1e-12, "H(z, {y})");
    }
    for y in [1.05, 1.1, 1.2] {
        assert!(h_function(&g, &pair, &spec, z, y).unwrap() < 0.0, "H(z, {y})");
    }
    let far: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&y| h_function(&g, &pair, &spec, z, y).unwrap()).collect();
    assert!(far[0] > 0.0 && far[1] > far[0] && far[2] > far[1]);
}

#[test]
fn h_vanishes_at_the_optimum() {
    let (spec, pair) = logistic();
    let rep = logistic_rep();
    let g = Payoff::max_with_floor(1.0);
    let (z, y) = (rep.z_star, rep.y_star);
    let h = h_function(&g, &pair, &spec, z, y).unwrap();
    let scale = h_function(&g, &pair, &spec, 0.9 * z, y).unwrap().abs()
        + h_function(&g, &pair, &spec, z, 1.1 * y).unwrap().abs();
    assert!(h.abs() < 1e-8 * scale, "H = {h:e}, scale {scale:e}");
}

#[test]
fn h_partials_match_finite_differences() {
    let g = Payoff::max_with_floor(1.0);
    for (spec, pair, pts) in [
        (testbed().0, testbed().1, vec![(0.6, 1.3), (0.9, 2.0), (0.3, 1.1)]),
        (logistic().0, logistic().1, vec![(0.7, 1.3), (0.85, 1.6)]),
    ] {
        for (z, y) in pts {
            let (hz, hy) = h_partials(&g, &pair, &spec, z, y).unwrap();
            let (dz, dy) = (1e-5 * z, 1e-5 * y);
            let fz = (h_function(&g, &pair, &spec, z + dz, y).unwrap() - h_function(&g, &pair, &spec, z - dz, y).unwrap()) / (2.0 * dz);
            let fy = (h_function(&g, &pair, &spec, z, y + dy).unwrap() - h_function(&g, &pair, &spec, z, y - dy).unwrap()) / (2.0 * dy);
            assert!((hz - fz).abs() < 1e-4 * fz.abs(), "H_z at ({z},{y}): {hz} vs {fz}");
            assert!((hy - fy).abs() < 1e-4 * fy.abs(), "H_y at ({z},{y}): {hy} vs {fy}");
        }
    }
}

#[test]
fn u1_boundary_signs() {
    let (_, pair) = testbed();
    let (_, lpair) = logistic();
    for (z, y) in [(0.2, 0.3), (0.5, 1.5), (0.93, 1.09), (2.0, 40.0)] {
        let (uz, uy) = u1_boundary_values(&pair, z, y);
        assert!(uz > 0.0 && uy < 0.0);
        let b = pair.wronskian();
        assert!(close(uz, pair.psi_hat_prime(z, y) / pair.s_prime(y) - b, 1e-10));
        assert!(close(uy, b + pair.phi_hat_prime(y, z) / pair.s_prime(z), 1e-10));
        let (uz, uy) = u1_boundary_values(&lpair, z.min(1.5), y.min(3.0));
        assert!(uz > 0.0 && uy < 0.0);
    }
}

// ---------- optimal pairs ----------

#[test]
fn floor_problem_matches_closed_forms() {
    for (mu, sigma, r) in [(0.15, 0.1f64.sqrt(), 0.4), (0.05, 0.2, 0.1)] {
        let (spec, pair) = gbm(mu, sigma, r);
        let (kp, km) = pair.kappa().unwrap();
        for c in [1.0, 2.5] {
            let g = Payoff::max_with_floor(c);
            let opt = solve_optimal_pair(&g, &pair, &spec, &TwoSidedConfig::default()).unwrap();
            let (z, y) = floor_thresholds(kp, km, c);
            assert!((opt.z_star / z - 1.0).abs() < 1e-8, "z* {} vs {z}", opt.z_star);
            assert!((opt.y_star / y - 1.0).abs() < 1e-8, "y* {} vs {y}", opt.y_star);
            assert!(opt.smooth_fit_lower && opt.smooth_fit_upper);
        }
    }
}

#[test]
fn logistic_thresholds() {
    let rep = logistic_rep();
    assert!((rep.z_star - 0.8889).abs() < 1e-3);
    assert!((rep.y_star - 1.2242).abs() < 1e-3);
    assert!((rep.zeta - 1.9444).abs() < 1e-3);
    assert!(rep.smooth_fit_lower && rep.smooth_fit_upper);
    assert!(rep.f1_at(rep.z_star).abs() < 1e-6 && rep.f2_at(rep.y_star).abs() < 1e-6);
    let check = rep.zeta_check.unwrap();
    assert!((check - rep.zeta).abs() < 1e-6);
}

#[test]
fn logistic_optimum_against_a_direct_search() {
    // maximise the two-point value at x = 1 without any of the solver's machinery
    let (_, pair) = logistic();
    let g = Payoff::max_with_floor(1.0);
    let v = |z: f64, y: f64| value_two_sided(&g, &pair, z, y, 1.0).unwrap();
    let best_y = |z: f64| golden_max(|y| v(z, y), 1.0001, 2.0);
    let z = golden_max(|z| v(z, best_y(z)), 0.5, 0.9999);
    let y = best_y(z);
    let rep = logistic_rep();
    assert!((rep.z_star - z).abs() < 1e-5, "{} vs {z}", rep.z_star);
    assert!((rep.y_star - y).abs() < 1e-5, "{} vs {y}", rep.y_star);
}

#[test]
fn symmetric_straddle_against_a_direct_search() {
    let (spec, pair) = testbed();
    let g = Payoff::capped_straddle(5.0, 2.0).unwrap();
    let rep = solve_two_sided(&g, &pair, &spec, &TwoSidedConfig::default()).unwrap();
    assert_eq!(rep.y_star, 7.0);
    assert!(!rep.smooth_fit_upper && rep.smooth_fit_lower);
    // with ψ = x², φ = x⁻⁴ the value at x = 5 is explicit in (z, y)
    let v = |z: f64, y: f64| {
        let (phi, psi) = (|t: f64| t.powi(-4), |t: f64| t * t);
        let ph = |yy: f64, t: f64| phi(t) * psi(yy) - phi(yy) * psi(t);
        let ps = |zz: f64, t: f64| psi(t) * phi(zz) - psi(zz) * phi(t);
        g.value(z) * ph(y, 5.0) / ph(y, z) + g.value(y) * ps(z, 5.0) / ps(z, y)
    };
    let best_y = |z: f64| golden_max(|y| v(z, y), 5.001, 7.0);
    let z = golden_max(|z| v(z, best_y(z)), 3.0, 4.999);
    assert!((best_y(z) - 7.0).abs() < 1e-6);
    assert!((rep.z_star - z).abs() < 1e-6, "{} vs {z}", rep.z_star);
}

#[test]
fn asymmetric_straddle_representation() {
    let rep = asym_rep();
    assert!((rep.z_star - 3.78).abs() < 0.01);
    assert_eq!(rep.y_star, 8.0);
    assert_eq!(rep.zeta, rep.y_star);
    let formula = |x: f64| {
        let x6 = x.powi(6) / 2048.0;
        (x6 - 18.0 * x * x + 256.0) / (x6 - 6.0 * x * x + 256.0)
    };
    for k in 1..=60 {
        let i = rep.z_star * k as f64 / 60.0;
        assert!(close(rep.f1_at(i), formula(i), 1e-5), "f1({i}) = {} vs {}", rep.f1_at(i), formula(i));
    }
    for m in [8.0, 8.5, 10.0, 30.0, 1e3] {
        assert!((rep.f2_at(m) - 3.0).abs() < 1e-12);
    }
    let lim = one_sided_limit_check(rep);
    assert!(lim.tail_deviation < 1e-12);
}

// ---------- curves ----------

#[test]
fn beta_is_anchored_and_matches_f1_to_f2() {
    for rep in [floor_rep(), logistic_rep()] {
        assert!(close(rep.beta_at(rep.z_star), rep.y_star, 1e-9));
        let xs = rep.beta.xs();
        let ys = rep.beta.ys();
        for k in (0..xs.len()).step_by(7) {
            let (i, b) = (xs[k], ys[k]);
            let (f1, f2) = (rep.f1_at(i), rep.f2_at(b));
            assert!((f1 - f2).abs() < 1e-7 * f1.abs().max(1.0), "at i={i}: {f1} vs {f2}");
        }
    }
}

#[test]
fn closed_and_integral_forms_agree_at_every_node() {
    let g = Payoff::max_with_floor(1.0);
    for (rep, (spec, pair), stride) in [(floor_rep(), testbed(), 1), (logistic_rep(), logistic(), 4)] {
        let xs = rep.beta.xs();
        let ys = rep.beta.ys();
        for k in (0..xs.len()).step_by(stride) {
            let (i, b) = (xs[k], ys[k]);
            let closed = lower_ratio(&g, &pair, i, b, Side::Right);
            let integral = lower_ratio_integral(&g, &pair, &spec, i, b).unwrap();
            assert!((closed - integral).abs() < 1e-6 * closed.abs().max(1.0), "F1 at ({i},{b}): {closed} vs {integral}");
            let closed = upper_ratio(&g, &pair, i, b, Side::Left);
            let integral = upper_ratio_integral(&g, &pair, &spec, i, b).unwrap();
            assert!((closed - integral).abs() < 1e-6 * closed.abs().max(1.0), "F2 at ({i},{b}): {closed} vs {integral}");
        }
    }
}

#[test]
fn floor_zeta_solves_f2_equal_to_c() {
    let rep = floor_rep();
    let (spec, _) = testbed();
    let a = spec.interval().0;
    // f₁(a+) = c
    assert!(close(rep.f1_at(a + 1e-9), 1.0, 1e-6));
    assert!(rep.zeta.is_finite());
    assert!(close(rep.f2_at(rep.zeta), 1.0, 1e-7));
    let lim = one_sided_limit_check(rep);
    assert!(lim.tail_deviation < 1e-12);
}

#[test]
fn pinned_lower_boundary_reduces_to_one_sided() {
    let (spec, pair) = testbed();
    let g = Payoff::capped_call(3.0, 2.0).unwrap();
    let grid: Vec<f64> = (0..40).map(|k| 5.0 + 0.5 * k as f64).collect();
    let z_pin = spec.unit_map(1.0).from_unit(1e-6);
    assert!(pinned_limit_deviation(&g, &pair, z_pin, &grid) < 1e-6);
}

#[test]
fn scaling_the_payoff_scales_the_representation() {
    let (spec, pair) = logistic();
    let base = logistic_rep();
    let g2 = Payoff::max_with_floor(1.0).scaled(2.0);
    let rep = solve_two_sided(&g2, &pair, &spec, &TwoSidedConfig::default()).unwrap();
    assert!(close(rep.z_star, base.z_star, 1e-9));
    assert!(close(rep.y_star, base.y_star, 1e-9));
    assert!(close(rep.zeta, base.zeta, 1e-9));
    for i in [0.3, 0.6, 0.85] {
        assert!(close(rep.f1_at(i), 2.0 * base.f1_at(i), 1e-9));
        assert!(close(rep.beta_at(i), base.beta_at(i), 1e-9));
    }
    for m in [1.3, 1.6, 1.9] {
        assert!(close(rep.f2_at(m), 2.0 * base.f2_at(m), 1e-9));
        assert!(close(rep.alpha_at(m), base.alpha_at(m), 1e-9));
    }
    for x in [0.5, 1.0, 2.0] {
        assert!(close(rep.value(x), 2.0 * base.value(x), 1e-9));
    }
}

// ---------- J = V ----------

#[test]
fn j_equals_v_for_the_floor_problems() {
    let rep = floor_rep();
    let xs: Vec<f64> = (1..50).map(|k| 0.05 * k as f64).collect();
    let js = j_values_two_sided(rep, &xs).unwrap();
    for (&x, &j) in xs.iter().zip(&js) {
        assert!(close(j, rep.value(x), 1e-8), "x={x}: {j} vs {}", rep.value(x));
    }
    assert!(close(j_value_two_sided(rep, rep.z_star).unwrap(), 1.0, 1e-8));
    for x in [rep.zeta, rep.zeta * 1.5] {
        assert!(close(j_value_two_sided(rep, x).unwrap(), x, 1e-8));
    }
    let lrep = logistic_rep();
    assert!(close(j_value_two_sided(lrep, 1.0).unwrap(), lrep.value(1.0), 1e-5));
}

#[test]
fn marginal_bounds_on_j() {
    // with f₁, f₂ ≥ 0: max(lower, upper) ≤ J ≤ lower + upper
    let rep = floor_rep();
    let (_, pair) = testbed();
    let opts = QuadOpts::tight();
    for x in [0.95, 1.0, 1.03, 1.06, 1.08] {
        let upper = pair.psi(x)
            * integrate(|m| rep.f2_at(m) * pair.psi_prime(m) / pair.psi(m).powi(2), rep.y_star.max(x), f64::INFINITY, &[], &opts)
                .unwrap();
        let lower = -pair.phi(x)
            * integrate(|i| rep.f1_at(i) * pair.phi_prime(i) / pair.phi(i).powi(2), 0.0, rep.z_star.min(x), &[], &opts)
                .unwrap();
        let j = j_value_two_sided(rep, x).unwrap();
        assert!(j >= lower.max(upper) - 1e-9 && j <= lower + upper + 1e-9, "x={x}: {lower} {upper} {j}");
    }
}

#[test]
fn mirrored_branch_uses_the_lower_tail() {
    // GBM with κ± = (4, −2) and g = max(1/x, 1) is the floor problem seen through x ↦ 1/x
    let (spec, pair) = gbm(-0.05, 0.1f64.sqrt(), 0.4);
    let g = Payoff::custom(
        |x: f64| (1.0 / x).max(1.0),
        |x: f64, s| if x < 1.0 || (x == 1.0 && s == Side::Left) { -1.0 / (x * x) } else { 0.0 },
        |x: f64, s| if x < 1.0 || (x == 1.0 && s == Side::Left) { 2.0 / (x * x * x) } else { 0.0 },
        vec![1.0],
    );
    let rep = solve_two_sided(&g, &pair, &spec, &TwoSidedConfig::default()).unwrap();
    let (zf, yf) = floor_thresholds(2.0, -4.0, 1.0);
    assert!(close(rep.z_star, 1.0 / yf, 1e-8));
    assert!(close(rep.y_star, 1.0 / zf, 1e-8));
    let tail = rep.lower_tail.expect("β escapes to b");
    assert!(close(tail, 0.5, 1e-6));
    let xs: Vec<f64> = (1..40).map(|k| 0.05 * k as f64).collect();
    for (&x, &j) in xs.iter().zip(&j_values_two_sided(&rep, &xs).unwrap()) {
        assert!(close(j, rep.value(x), 1e-8), "x={x}: {j} vs {}", rep.value(x));
    }
}

// ---------- stopping signal ----------

#[test]
fn signal_equals_representation_on_the_stopping_set() {
    let rep = floor_rep();
    let (spec, pair) = testbed();
    let g = Payoff::max_with_floor(1.0);
    let cfg = SignalConfig::default();
    let below: Vec<f64> = (1..=5).map(|k| rep.z_star * k as f64 / 5.5).collect();
    let above: Vec<f64> = (0..5).map(|k| rep.y_star * (1.05 + 0.4 * k as f64)).collect();
    for &x in &below {
        let s = stopping_signal(&g, &pair, &spec, x, &cfg).unwrap();
        assert!((s.gamma - rep.f1_at(x)).abs() < 1e-5, "x={x}: {} vs {}", s.gamma, rep.f1_at(x));
    }
    for &x in &above {
        let s = stopping_signal(&g, &pair, &spec, x, &cfg).unwrap();
        assert!((s.gamma - rep.f2_at(x)).abs() < 1e-5 * rep.f2_at(x).max(1.0), "x={x}: {} vs {}", s.gamma, rep.f2_at(x));
    }
    for x in [0.95, 1.0, 1.05] {
        assert!(stopping_signal(&g, &pair, &spec, x, &cfg).unwrap().gamma < 0.0);
    }
}

#[test]
fn upper_ratio_limit_is_minus_generator_over_r() {
    let (spec, pair) = testbed();
    let g = Payoff::call(3.0);
    for x in [1.0, 4.0, 7.0] {
        let lim = -generator_at(&g, &spec, x, Side::Right) / spec.r();
        let near = lower_ratio(&g, &pair, x, x * (1.0 + 1e-5), Side::Right);
        assert!((near - lim).abs() < 1e-3 * lim.abs().max(1.0), "x={x}: {near} vs {lim}");
    }
    assert!((f_hat(&g, &pair, 6.0, Side::Right)).abs() < 1e-14);
}
