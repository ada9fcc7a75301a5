//! The `solve`, `verify` and `laws` commands.

use std::collections::BTreeMap;
use std::path::Path;

use expsup::curve::{Direction, Interp, TabulatedCurve};
use expsup::laws::{inf_cdf, joint_cdf, sup_cdf};
use expsup::numerics::Side;
use expsup::one_sided::{f_hat_integral, j_value, solve_one_sided, value_threshold, RepresentationOneSided};
use expsup::sim::{empirical_law_check, simulate_expected_sup, simulate_extremes, McEstimate, PathSimConfig};
use expsup::two_sided::{
    j_values_two_sided, lower_ratio, lower_ratio_integral, solve_two_sided, stopping_signal, upper_ratio,
    upper_ratio_integral, value_two_sided, RepresentationTwoSided, SignalConfig,
};
use serde::Serialize;

use crate::config::{Format, Mode, Problem, ProblemConfig};
use crate::output::{write_record, Cell, Table};
use crate::CliError;

pub enum Solved {
    One(RepresentationOneSided),
    Two(RepresentationTwoSided),
}

pub fn solve_problem(cfg: &ProblemConfig, p: &Problem) -> Result<Solved, CliError> {
    Ok(match cfg.solver.mode {
        Mode::OneSided => Solved::One(
            solve_one_sided(&p.payoff, &p.pair, &p.spec, &cfg.solver.one_sided)
                .map_err(|e| CliError::numeric("one_sided::solve_one_sided", e))?,
        ),
        Mode::TwoSided => Solved::Two(
            solve_two_sided(&p.payoff, &p.pair, &p.spec, &cfg.solver.two_sided)
                .map_err(|e| CliError::numeric("two_sided::solve_two_sided", e))?,
        ),
    })
}

fn default_range(s: &Solved) -> (f64, f64) {
    match s {
        Solved::One(r) => (0.1 * r.y_star, 2.0 * r.y_star),
        Solved::Two(r) => (0.5 * r.z_star, 2.0 * r.y_star.min(r.zeta.max(r.y_star))),
    }
}

pub fn summary_json(s: &Solved) -> serde_json::Value {
    match s {
        Solved::One(r) => tagged("one_sided", &r.summary()),
        Solved::Two(r) => tagged("two_sided", &r.summary()),
    }
}

fn tagged<T: Serialize>(mode: &str, v: &T) -> serde_json::Value {
    let mut v = serde_json::to_value(v).expect("summary serialises");
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("mode".into(), mode.into());
    }
    v
}

pub fn solve_table(cfg: &ProblemConfig, p: &Problem, s: &Solved) -> Table {
    let (lo, hi) = default_range(s);
    let xs = cfg.solver.grid.points(lo, hi);
    match s {
        Solved::One(r) => {
            let mut t = Table::new(&["x", "g", "V", "region", "f"]);
            for &x in &xs {
                let stop = x >= r.y_star;
                t.push(vec![
                    x.into(),
                    p.payoff.value(x).into(),
                    r.value(x).into(),
                    if stop { "stop" } else { "continuation" }.into(),
                    if stop { Cell::Num(r.f_hat(x)) } else { Cell::Empty },
                ]);
            }
            t
        }
        Solved::Two(r) => {
            let mut t = Table::new(&["x", "g", "V", "region", "f", "beta", "alpha"]);
            for &x in &xs {
                let (region, f, beta, alpha) = if x <= r.z_star {
                    ("stop_lower", Cell::Num(r.f1_at(x)), Cell::Num(r.beta_at(x)), Cell::Empty)
                } else if x >= r.y_star {
                    let alpha = if x < r.zeta { Cell::Num(r.alpha_at(x)) } else { Cell::Empty };
                    ("stop_upper", Cell::Num(r.f2_at(x)), Cell::Empty, alpha)
                } else {
                    ("continuation", Cell::Empty, Cell::Empty, Cell::Empty)
                };
                t.push(vec![x.into(), p.payoff.value(x).into(), r.value(x).into(), region.into(), f, beta, alpha]);
            }
            t
        }
    }
}

pub fn cmd_solve(cfg: &ProblemConfig, out: &Path, format: Format) -> Result<(), CliError> {
    let p = cfg.build()?;
    let s = solve_problem(cfg, &p)?;
    let summary = summary_json(&s);
    write_record(&summary, out, "summary", format)?;
    solve_table(cfg, &p, &s).write(out, "table", format)?;
    println!("{}", serde_json::to_string(&summary).expect("json"));
    Ok(())
}

// ---------- verify ----------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub status: Status,
    pub observed: Option<f64>,
    pub tolerance: Option<f64>,
    pub note: String,
}

impl CheckRow {
    fn judged(check: &str, observed: f64, tolerance: f64, note: String) -> Self {
        let status = if observed <= tolerance { Status::Pass } else { Status::Fail };
        CheckRow { check: check.into(), status, observed: Some(observed), tolerance: Some(tolerance), note }
    }

    fn other(check: &str, status: Status, note: String) -> Self {
        CheckRow { check: check.into(), status, observed: None, tolerance: None, note }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Judges a simulated mean against its target, or calls it inconclusive when
/// the band is too wide to say anything.
fn mc_row(check: &str, est: &McEstimate, target: f64, cfg: &ProblemConfig, allowance: f64) -> CheckRow {
    let band = cfg.verify.mc_sigmas * est.std_error;
    let note = format!("estimate {:.6} ± {:.6} vs {:.6} ({} samples)", est.estimate, est.std_error, target, est.samples);
    if band > cfg.verify.mc_max_rel_band * target.abs().max(1e-12) {
        return CheckRow::other(check, Status::Inconclusive, format!("inconclusive (s.e. too large): {note}"));
    }
    let dev = (est.estimate - target).abs();
    CheckRow::judged(check, dev, band + allowance, note)
}

fn sim_failure(check: &str, e: expsup::error::Error) -> Result<CheckRow, CliError> {
    match e {
        expsup::error::Error::SchemeError(m) => Ok(CheckRow::other(check, Status::Skipped, m)),
        e => Err(CliError::numeric("sim", e)),
    }
}

fn verify_one(cfg: &ProblemConfig, p: &Problem, r: &RepresentationOneSided) -> Result<Vec<CheckRow>, CliError> {
    let mut rows = Vec::new();
    let (lo, hi) = default_range(&Solved::One(r.clone()));
    let xs = cfg.solver.grid.points(lo, hi);

    let y_claim = cfg.verify.inject_y_star.unwrap_or(r.y_star);
    let mut worst: f64 = 0.0;
    for &x in &xs {
        let j = j_value(r, x).map_err(|e| CliError::numeric("one_sided::j_value", e))?;
        let v = value_threshold(&p.payoff, &p.pair, y_claim, x).map_err(|e| CliError::numeric("one_sided::value_threshold", e))?;
        worst = worst.max(rel(j, v));
    }
    rows.push(CheckRow::judged("j_equals_v", worst, cfg.verify.j_tol, format!("{} points, threshold {y_claim}", xs.len())));

    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let x = r.y_star * (1.0 + 0.2 * k as f64);
        let i = f_hat_integral(&p.payoff, &p.pair, &p.spec, r.y_star, x).map_err(|e| CliError::numeric("one_sided::f_hat_integral", e))?;
        let c = r.f_hat(x);
        worst = worst.max((i - c).abs() / c.abs().max(1.0));
    }
    rows.push(CheckRow::judged("dual_formula", worst, 1e-6, "closed vs integral f̂ at 10 stop-region points".into()));

    if !r.monotone_on_stop_region {
        rows.push(CheckRow::other(
            "mc_expected_sup",
            Status::Skipped,
            format!("f̂ decreases from {:?}; V is not an expected supremum here", r.first_decrease),
        ));
    } else {
        let top = r.y_star * 60.0;
        let pts: Vec<(f64, f64)> = (0..=4000).map(|k| r.y_star + (top - r.y_star) * (k as f64 / 4000.0).powi(2)).map(|x| (x, r.f_hat(x))).collect();
        let f = TabulatedCurve::new(pts, Interp::MonotoneCubic).map_err(|e| CliError::numeric("curve", e))?;
        let points = if cfg.verify.mc_points.is_empty() { vec![0.8 * r.y_star] } else { cfg.verify.mc_points.clone() };
        for x in points {
            let est = simulate_expected_sup(|y| if y <= top { f.eval(y) } else { r.f_hat(y) }, |y| y >= r.y_star, &p.spec, x, &cfg.simulation);
            rows.push(match est {
                Ok(est) => mc_row(&format!("mc_expected_sup@{x}"), &est, r.value(x), cfg, 0.0),
                Err(e) => sim_failure(&format!("mc_expected_sup@{x}"), e)?,
            });
        }
    }
    Ok(rows)
}

fn verify_two(cfg: &ProblemConfig, p: &Problem, r: &RepresentationTwoSided) -> Result<Vec<CheckRow>, CliError> {
    let mut rows = Vec::new();
    let (lo, hi) = default_range(&Solved::Two(r.clone()));
    let xs = cfg.solver.grid.points(lo, hi);

    let y_claim = cfg.verify.inject_y_star.unwrap_or(r.y_star);
    let js = j_values_two_sided(r, &xs).map_err(|e| CliError::numeric("two_sided::j_values_two_sided", e))?;
    let mut worst: f64 = 0.0;
    for (&x, &j) in xs.iter().zip(&js) {
        let v = if x > r.z_star && x < y_claim {
            value_two_sided(&p.payoff, &p.pair, r.z_star, y_claim, x).map_err(|e| CliError::numeric("two_sided::value_two_sided", e))?
        } else {
            p.payoff.value(x)
        };
        worst = worst.max(rel(j, v));
    }
    rows.push(CheckRow::judged(
        "j_equals_v",
        worst,
        cfg.verify.j_tol,
        format!("{} points, thresholds ({}, {y_claim})", xs.len(), r.z_star),
    ));

    let (is, bs) = (r.beta.xs(), r.beta.ys());
    let step = (is.len() / 24).max(1);
    let mut worst: f64 = 0.0;
    for k in (0..is.len()).step_by(step) {
        let (i, b) = (is[k], bs[k]);
        if !b.is_finite() {
            continue;
        }
        let pairs = [
            (lower_ratio(&p.payoff, &p.pair, i, b, Side::Right), lower_ratio_integral(&p.payoff, &p.pair, &p.spec, i, b)),
            (upper_ratio(&p.payoff, &p.pair, i, b, Side::Left), upper_ratio_integral(&p.payoff, &p.pair, &p.spec, i, b)),
        ];
        for (c, q) in pairs {
            let q = q.map_err(|e| CliError::numeric("two_sided::ratio_integral", e))?;
            worst = worst.max((c - q).abs() / c.abs().max(1.0));
        }
    }
    rows.push(CheckRow::judged("dual_formula", worst, 1e-6, "closed vs integral F₁, F₂ along β".into()));

    let n = cfg.verify.signal_points.max(2);
    let below = (1..=n / 2).map(|k| r.z_star * k as f64 / (n / 2) as f64 * 0.95);
    let above = (0..n - n / 2).map(|k| r.y_star * (1.05 + 0.5 * k as f64));
    let mut worst: f64 = 0.0;
    for x in below.chain(above) {
        let s = stopping_signal(&p.payoff, &p.pair, &p.spec, x, &SignalConfig::default())
            .map_err(|e| CliError::numeric("two_sided::stopping_signal", e))?;
        worst = worst.max((s.gamma - r.representation(x)).abs());
    }
    rows.push(CheckRow::judged("stopping_signal", worst, 1e-4, format!("|γ − f| at {n} points of the stopping set")));

    let f1_ok = r.f1.is_monotone(Direction::Decreasing, 1e-9);
    let f2_ok = r.f2.is_monotone(Direction::Increasing, 1e-9);
    if !(f1_ok && f2_ok) {
        rows.push(CheckRow::other("mc_expected_sup", Status::Skipped, "f₁/f₂ not monotone; shortcut estimator does not apply".into()));
    } else {
        let points = if cfg.verify.mc_points.is_empty() { vec![(r.z_star * r.y_star).sqrt()] } else { cfg.verify.mc_points.clone() };
        for x in points {
            let name = format!("mc_expected_sup@{x}");
            match simulate_extremes(&p.spec, x, &cfg.simulation) {
                Ok(sample) => {
                    let est = sample.estimate(|i, m| {
                        let lo = if i <= r.z_star { r.representation_tabulated(i) } else { 0.0 };
                        let up = if m >= r.y_star { r.representation_tabulated(m) } else { 0.0 };
                        lo.max(up).max(0.0)
                    });
                    rows.push(mc_row(&name, &est, r.value(x), cfg, expsup::sim::discretization_allowance(&cfg.simulation)));
                }
                Err(e) => rows.push(sim_failure(&name, e)?),
            }
        }
    }
    Ok(rows)
}

fn verify_laws(cfg: &ProblemConfig, p: &Problem) -> Result<Vec<CheckRow>, CliError> {
    let mut by_x: BTreeMap<u64, (f64, Vec<(f64, f64)>)> = BTreeMap::new();
    for q in &cfg.laws.probes {
        if let (Some(i), Some(m)) = (q.i, q.m) {
            by_x.entry(q.x.to_bits()).or_insert((q.x, Vec::new())).1.push((i, m));
        }
    }
    let mut rows = Vec::new();
    for (x, probes) in by_x.into_values() {
        let name = format!("extremal_laws@{x}");
        let rpt = match empirical_law_check(&p.spec, &p.pair, x, &probes, &cfg.simulation) {
            Ok(r) => r,
            Err(e) => {
                rows.push(sim_failure(&name, e)?);
                continue;
            }
        };
        let cmps: Vec<_> = rpt.rows.iter().flat_map(|r| [r.joint, r.sup, r.inf]).flatten().collect();
        let band = cmps.iter().map(|c| cfg.verify.mc_sigmas * c.std_error).fold(0.0, f64::max);
        let worst = cmps.iter().map(|c| (c.empirical - c.analytic).abs() / c.std_error.max(1e-300)).fold(0.0, f64::max);
        let invalid = rpt.rows.iter().filter(|r| !r.valid).count();
        let note = format!("{} comparisons, worst {worst:.2} s.e., {invalid} invalid probes", cmps.len());
        rows.push(if band > cfg.verify.mc_max_rel_band {
            CheckRow::other(&name, Status::Inconclusive, format!("inconclusive (s.e. too large): {note}"))
        } else if rpt.all_within {
            CheckRow { check: name, status: Status::Pass, observed: Some(worst), tolerance: Some(cfg.verify.mc_sigmas), note }
        } else {
            CheckRow { check: name, status: Status::Fail, observed: Some(worst), tolerance: Some(cfg.verify.mc_sigmas), note }
        });
    }
    Ok(rows)
}

pub fn run_verify(cfg: &ProblemConfig) -> Result<Vec<CheckRow>, CliError> {
    let p = cfg.build()?;
    let s = solve_problem(cfg, &p)?;
    let mut rows = match &s {
        Solved::One(r) => verify_one(cfg, &p, r)?,
        Solved::Two(r) => verify_two(cfg, &p, r)?,
    };
    rows.extend(verify_laws(cfg, &p)?);
    Ok(rows)
}

pub fn report_table(rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&["check", "status", "observed", "tolerance", "note"]);
    for r in rows {
        let status = serde_json::to_value(r.status).expect("json").as_str().unwrap_or_default().to_string();
        t.push(vec![r.check.clone().into(), status.into(), r.observed.into(), r.tolerance.into(), r.note.clone().into()]);
    }
    t
}

/// Returns whether every judged check passed.
pub fn cmd_verify(cfg: &ProblemConfig, out: &Path, format: Format) -> Result<bool, CliError> {
    let rows = run_verify(cfg)?;
    report_table(&rows).write(out, "report", format)?;
    for r in &rows {
        println!("{:<24} {:<12} {}", r.check, format!("{:?}", r.status).to_lowercase(), r.note);
    }
    Ok(rows.iter().all(|r| r.status != Status::Fail))
}

// ---------- laws ----------

pub fn laws_table(cfg: &ProblemConfig, p: &Problem) -> Result<(Table, Vec<String>), CliError> {
    let empirical = cfg.laws.empirical;
    let mut cols = vec!["x", "i", "m", "sup_cdf", "inf_cdf", "joint_cdf"];
    if empirical {
        cols.extend(["sup_emp", "sup_se", "inf_emp", "inf_se", "joint_emp", "joint_se"]);
    }
    let mut t = Table::new(&cols);
    let mut skipped = Vec::new();
    let mut samples: BTreeMap<u64, expsup::sim::ExtremesSample> = BTreeMap::new();
    for q in &cfg.laws.probes {
        let ordered = q.i.is_none_or(|i| i <= q.x) && q.m.is_none_or(|m| m >= q.x) && p.spec.contains(q.x);
        if !ordered {
            skipped.push(format!("probe {q:?} skipped: need i ≤ x ≤ m inside the state space"));
            continue;
        }
        let sup = q.m.map(|m| sup_cdf(&p.pair, q.x, m)).transpose();
        let inf = q.i.map(|i| inf_cdf(&p.pair, q.x, i)).transpose();
        let joint = q.i.zip(q.m).map(|(i, m)| joint_cdf(&p.pair, q.x, i, m)).transpose();
        let (sup, inf, joint) = match (sup, inf, joint) {
            (Ok(s), Ok(i), Ok(j)) => (s, i, j),
            (s, i, j) => {
                let e = s.err().or(i.err()).or(j.err()).expect("one failed");
                skipped.push(format!("probe {q:?} skipped: {e}"));
                continue;
            }
        };
        let mut row: Vec<Cell> = vec![q.x.into(), q.i.into(), q.m.into(), sup.into(), inf.into(), joint.into()];
        if empirical {
            if !samples.contains_key(&q.x.to_bits()) {
                let s = simulate_extremes(&p.spec, q.x, &cfg.simulation).map_err(|e| CliError::numeric("sim::simulate_extremes", e))?;
                samples.insert(q.x.to_bits(), s);
            }
            let s = &samples[&q.x.to_bits()];
            let cell = |e: Option<McEstimate>| -> [Cell; 2] {
                e.map_or([Cell::Empty, Cell::Empty], |e| [e.estimate.into(), e.std_error.into()])
            };
            row.extend(cell(q.m.map(|m| s.frequency(|p| p.sup <= m))));
            row.extend(cell(q.i.map(|i| s.frequency(|p| p.inf <= i))));
            row.extend(cell(q.i.zip(q.m).map(|(i, m)| s.frequency(|p| p.inf <= i && p.sup <= m))));
        }
        t.push(row);
    }
    Ok((t, skipped))
}

pub fn cmd_laws(cfg: &ProblemConfig, out: &Path, format: Format) -> Result<(), CliError> {
    let p = cfg.build()?;
    let (t, skipped) = laws_table(cfg, &p)?;
    for s in &skipped {
        eprintln!("{s}");
    }
    t.write(out, "laws", format)
}

pub fn seed_override(sim: &mut PathSimConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        sim.seed = s;
    }
}
