use expsup::diffusion::DiffusionSpec;
use expsup::functionals::Payoff;
use expsup::fundamental::*;
use expsup::laws::*;
use expsup::numerics::{integrate, QuadOpts};
use expsup::one_sided::{solve_one_sided, OneSidedConfig};
use expsup::sim::*;

fn testbed() -> (DiffusionSpec, FundamentalPair) {
    let s = 0.1f64.sqrt();
    (DiffusionSpec::gbm(0.15, s, 0.4).unwrap(), make_gbm_pair(0.15, s, 0.4).unwrap())
}

fn logistic() -> (DiffusionSpec, FundamentalPair) {
    (
        DiffusionSpec::logistic(0.07, 0.5, 0.1, 0.035).unwrap(),
        make_logistic_pair(0.07, 0.5, 0.1, 0.035).unwrap(),
    )
}

#[test]
fn marginal_laws_are_distributions() {
    for (_, pair) in [testbed(), logistic()] {
        let x = 1.0;
        assert_eq!(sup_cdf(&pair, x, x).unwrap(), 0.0);
        assert_eq!(inf_cdf(&pair, x, x).unwrap(), 1.0);
        assert!(sup_cdf(&pair, x, 40.0).unwrap() > 0.999);
        assert!(inf_cdf(&pair, x, 1e-3).unwrap() < 1e-3);
        let ms = [1.1, 1.5, 2.0, 4.0];
        let cdf: Vec<f64> = ms.iter().map(|&m| sup_cdf(&pair, x, m).unwrap()).collect();
        assert!(cdf.windows(2).all(|w| w[0] < w[1]));
        assert!(sup_cdf(&pair, 2.0, 1.0).is_err() && inf_cdf(&pair, 1.0, 2.0).is_err());
    }
    // ψ = x², φ = x⁻⁴
    let (_, pair) = testbed();
    assert!((sup_cdf(&pair, 2.0, 4.0).unwrap() - 0.75).abs() < 1e-14);
    assert!((inf_cdf(&pair, 2.0, 1.0).unwrap() - 1.0 / 16.0).abs() < 1e-14);
}

#[test]
fn joint_law_edges() {
    for (_, pair) in [testbed(), logistic()] {
        let (x, i, m) = (1.0, 0.7, 1.6);
        let j = joint_cdf(&pair, x, i, m).unwrap();
        assert!(j > 0.0 && j < sup_cdf(&pair, x, m).unwrap().min(inf_cdf(&pair, x, i).unwrap()));
        assert_eq!(joint_cdf(&pair, x, x, m).unwrap(), sup_cdf(&pair, x, m).unwrap());
        assert!(joint_cdf(&pair, x, i, x * (1.0 + 1e-9)).unwrap() < 1e-6);
        assert!(joint_cdf(&pair, x, 1e-4, m).unwrap() < 1e-6);
        let far = joint_cdf(&pair, x, i, 50.0).unwrap();
        let gap = inf_cdf(&pair, x, i).unwrap() - far;
        assert!(gap >= 0.0 && gap <= 1.0 - sup_cdf(&pair, x, 50.0).unwrap());
        // P(I ≤ i, M ≤ m) = P(I ≤ i) − P(I ≤ i, M > m) and the stay-inside event
        let stay = interior_survival(&pair, x, i, m).unwrap();
        let total = stay + inf_cdf(&pair, x, i).unwrap() + (1.0 - sup_cdf(&pair, x, m).unwrap()) - (inf_cdf(&pair, x, i).unwrap() - j);
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }
}

#[test]
fn one_sided_densities_integrate_to_marginals() {
    let opts = QuadOpts::tight();
    for (_, pair) in [testbed(), logistic()] {
        let (x, y, z) = (1.0, 1.5, 0.6);
        let p = integrate(|i| inf_density_below(&pair, x, i, y).unwrap(), 1e-9, x, &[], &opts).unwrap();
        assert!((p - sup_cdf(&pair, x, y).unwrap()).abs() < 1e-7, "{p}");
        let q = integrate(|m| sup_density_above(&pair, x, z, m).unwrap(), x, 20.0, &[], &opts).unwrap();
        let target = sup_cdf(&pair, x, 20.0).unwrap() - joint_cdf(&pair, x, z, 20.0).unwrap();
        assert!((q - target).abs() < 1e-8, "{q} vs {target}");
        // and they are the i- and m-derivatives of the joint law
        for i in [0.5, 0.8] {
            let h = 1e-6;
            let fd = (joint_cdf(&pair, x, i + h, y).unwrap() - joint_cdf(&pair, x, i - h, y).unwrap()) / (2.0 * h);
            assert!((fd - inf_density_below(&pair, x, i, y).unwrap()).abs() < 1e-6);
        }
    }
}

#[test]
fn conditional_law_normalisations() {
    let opts = QuadOpts::tight();
    let (spec, pair) = testbed();
    let (lspec, lpair) = logistic();
    for (spec, pair, i, v) in [(&spec, &pair, 1.0, 3.0), (&lspec, &lpair, 0.7, 1.8)] {
        let b = pair.wronskian();
        let r = spec.r();
        // r ∫ ψ̂_i m′ = ψ̂_i′(v)/S′(v) − B  and  r ∫ φ̂_v m′ = −B − φ̂_v′(i)/S′(i)
        let up = r * integrate(|y| pair.psi_hat(i, y) * pair.m_prime(y), i, v, &[], &opts).unwrap();
        assert!((up / (pair.psi_hat_prime(i, v) / pair.s_prime(v) - b) - 1.0).abs() < 1e-10);
        let down = r * integrate(|y| pair.phi_hat(v, y) * pair.m_prime(y), i, v, &[], &opts).unwrap();
        assert!((down / (-b - pair.phi_hat_prime(v, i) / pair.s_prime(i)) - 1.0).abs() < 1e-10);

        let one = integrate(|y| conditional_density_given_sup(pair, spec, i, v, y).unwrap(), i, v, &[], &opts).unwrap();
        assert!((one - 1.0).abs() < 1e-10);
        let one = integrate(|y| conditional_density_given_inf(pair, spec, i, v, y).unwrap(), i, v, &[], &opts).unwrap();
        assert!((one - 1.0).abs() < 1e-10);
        assert!((conditional_expectation_given_sup(|_| 1.0, pair, spec, i, v, &[]).unwrap() - 1.0).abs() < 1e-10);
        let mean = conditional_expectation_given_inf(|y| y, pair, spec, i, v, &[]).unwrap();
        let direct = integrate(|y| y * conditional_density_given_inf(pair, spec, i, v, y).unwrap(), i, v, &[], &opts).unwrap();
        assert!((mean - direct).abs() < 1e-10 && mean > i && mean < v);
    }
}

#[test]
fn conditional_density_shape_under_gbm() {
    // ψ̂₁(y) = y² − y⁻⁴ and m′(y) = 20y for the testbed
    let (spec, pair) = testbed();
    let shape = |y: f64| (y * y - y.powi(-4)) * 20.0 * y;
    let k0 = conditional_density_given_sup(&pair, &spec, 1.0, 3.0, 2.0).unwrap() / shape(2.0);
    for y in [1.1, 1.5, 2.5, 2.9] {
        let k = conditional_density_given_sup(&pair, &spec, 1.0, 3.0, y).unwrap() / shape(y);
        assert!((k / k0 - 1.0).abs() < 1e-12);
    }
    assert!(conditional_density_given_sup(&pair, &spec, 1.0, 1.0, 1.0).is_err());
}

// ---------- simulation ----------

fn cfg(n: usize, seed: u64) -> PathSimConfig {
    PathSimConfig { n_paths: n, seed, ..Default::default() }
}

#[test]
fn expected_sup_of_the_capped_call() {
    let (spec, pair) = testbed();
    let rep = solve_one_sided(&Payoff::capped_call(3.0, 2.0).unwrap(), &pair, &spec, &OneSidedConfig::default()).unwrap();
    let e = simulate_expected_sup(|y| rep.f_hat(y), |y| y >= rep.y_star, &spec, 4.0, &cfg(60_000, 3)).unwrap();
    assert!(e.agrees_with(1.28, 3.0, 0.0), "{e:?}");
    assert_eq!(e.samples, 60_000);
}

#[test]
fn empirical_laws_match() {
    let (spec, pair) = testbed();
    let probes = [(1.0, 4.0), (1.5, 3.0), (1.2, 2.5), (1.8, 2.2), (2.5, 3.0)];
    let rpt = empirical_law_check(&spec, &pair, 2.0, &probes, &cfg(40_000, 5)).unwrap();
    assert!(rpt.all_within, "{rpt:?}");
    assert_eq!(rpt.allowance, 0.0);
    let bad = &rpt.rows[4];
    assert!(!bad.valid && bad.note.is_some() && bad.joint.is_none());
    assert!(rpt.rows[..4].iter().all(|r| r.valid && r.joint.unwrap().within));
}

#[test]
fn euler_extremes_are_biased_and_the_bias_shrinks() {
    let (spec, pair) = testbed();
    let base = PathSimConfig { scheme: Scheme::EulerMaruyama, ..cfg(20_000, 9) };
    let pts = sup_cdf_trend(&spec, &pair, 2.0, 2.5, &base, &[0.2, 0.02]).unwrap();
    let err: Vec<f64> = pts.iter().map(|p| p.estimate.estimate - p.analytic).collect();
    // a grid misses excursions, so the maximum looks smaller than it is
    assert!(err[0] > 3.0 * pts[0].estimate.std_error);
    assert!(err[1] < err[0]);
    assert!(discretization_allowance(&base) > 0.0);
}

#[test]
fn same_seed_reproduces_and_antithetic_pairs() {
    let (spec, _) = testbed();
    let a = simulate_extremes(&spec, 2.0, &cfg(3000, 1)).unwrap();
    let b = simulate_extremes(&spec, 2.0, &cfg(3000, 1)).unwrap();
    let c = simulate_extremes(&spec, 2.0, &cfg(3000, 2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let anti = PathSimConfig { antithetic: true, ..cfg(4000, 1) };
    let s = simulate_extremes(&spec, 2.0, &anti).unwrap();
    assert!(s.paired && s.paths.len() == 4000);
    assert_eq!(s.frequency(|p| p.sup <= 2.5).samples, 2000);
    assert!(simulate_extremes(&spec, 2.0, &PathSimConfig { antithetic: true, ..cfg(3, 1) }).is_err());
    assert!(simulate_extremes(&spec, 2.0, &PathSimConfig { dt: 0.0, ..cfg(3, 1) }).is_err());
}
