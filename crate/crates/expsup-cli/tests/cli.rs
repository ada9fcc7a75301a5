use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn expsup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expsup")).args(args).output().unwrap()
}

fn default_config() -> String {
    String::from_utf8(expsup(&["emit-default-config"]).stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn with_problem(diffusion: &str, payoff: &str, extra: &str) -> String {
    let base = default_config();
    let start = base.find("[solver]").unwrap();
    format!("{diffusion}\n{payoff}\n{}\n{extra}", &base[start..])
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const LOGISTIC: &str = "[diffusion]\nkind = \"logistic\"\nmu = 0.07\ngamma = 0.5\nsigma = 0.1\nr = 0.035\n";
const TESTBED: &str = "[diffusion]\nkind = \"gbm\"\nmu = 0.15\nsigma = 0.31622776601683794\nr = 0.4\n";

#[test]
fn emitted_config_is_reusable() {
    let t = tempfile::tempdir().unwrap();
    let path = t.path().join("d.toml");
    assert!(expsup(&["emit-default-config", "--out", path.to_str().unwrap()]).status.success());
    assert_eq!(fs::read_to_string(&path).unwrap(), default_config());
}

#[test]
fn logistic_solve_summary() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "l.toml", &with_problem(LOGISTIC, "[payoff]\nkind = \"max_with_floor\"\nc = 1.0\n", ""));
    let out = t.path().join("out");
    let o = expsup(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    for (key, want) in [("z_star", 0.8889), ("y_star", 1.2242), ("zeta", 1.9444)] {
        assert!((s[key].as_f64().unwrap() - want).abs() < 1e-3, "{key}");
    }
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("table.json")).unwrap()).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 50);
}

#[test]
fn capped_call_is_a_corner() {
    let t = tempfile::tempdir().unwrap();
    let cfg = with_problem(TESTBED, "[payoff]\nkind = \"capped_call\"\nk = 3.0\nc = 2.0\n", "")
        .replace("mode = \"two_sided\"", "mode = \"one_sided\"");
    let cfg = write(t.path(), "c.toml", &cfg);
    let out = t.path().join("out");
    let o = expsup(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.contains("smooth_fit,false"));
    assert!(csv.contains("y_star,5.0000000000000000e0"));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.starts_with("x,g,V,region,f\n"));
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("out");
    for (name, text) in [
        ("kind.toml", default_config().replace("max_with_floor", "barrier_option")),
        ("typo.toml", default_config().replace("j_tol", "j_tolerance")),
        ("param.toml", default_config().replace("r = 0.4", "r = -0.4")),
    ] {
        let cfg = write(t.path(), name, &text);
        let o = expsup(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "ConfigError");
        assert!(!out.exists());
    }
    assert_eq!(expsup(&["solve", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(expsup(&["solve"]).status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_3_with_provenance() {
    // a linear call has no lower stopping region: the two-sided shape check fails
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "n.toml", &with_problem(TESTBED, "[payoff]\nkind = \"call\"\nk = 3.0\n", ""));
    let o = expsup(&["solve", "--config", &cfg, "--out", t.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["op"], "two_sided::solve_two_sided");
    assert_eq!(err["error"], "ShapeViolation");
}

#[test]
fn verify_battery() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "d.toml", &default_config());
    let out = t.path().join("v");
    let o = expsup(&["verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    for check in ["j_equals_v,pass", "dual_formula,pass", "stopping_signal,pass", "extremal_laws@2,pass"] {
        assert!(report.contains(check), "{check}\n{report}");
    }
    assert!(report.lines().any(|l| l.starts_with("mc_expected_sup@") && l.contains(",pass,")));

    // too few paths: the simulation checks cannot decide
    let small = write(t.path(), "s.toml", &default_config().replace("n_paths = 100000", "n_paths = 100"));
    let o = expsup(&["verify", "--config", &small, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("inconclusive (s.e. too large)"));
    assert!(!stdout.contains(" fail "));

    // a wrong threshold breaks J = V
    let bad = write(t.path(), "b.toml", &default_config().replace("signal_points = 10", "signal_points = 10\ninject_y_star = 1.3"));
    let o = expsup(&["verify", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stdout).unwrap().lines().any(|l| l.starts_with("j_equals_v") && l.contains("fail")));
}

#[test]
fn laws_tables() {
    let t = tempfile::tempdir().unwrap();
    let probes = "[[laws.probes]]\nx = 1.0\nm = 2.0\n\n[[laws.probes]]\nx = 2.0\ni = 3.0\nm = 4.0\n\n[[laws.probes]]\nx = 2.0\ni = 1.0\nm = 4.0\n";
    let base = default_config();
    let text = format!("{}{}", &base[..base.find("[[laws.probes]]").unwrap()], probes);
    let cfg = write(t.path(), "l.toml", &text);
    let csv_dir = t.path().join("c");
    let o = expsup(&["laws", "--config", &cfg, "--out", csv_dir.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("skipped"));
    let csv = fs::read_to_string(csv_dir.join("laws.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,i,m,sup_cdf,inf_cdf,joint_cdf");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "1.0000000000000000e0,,2.0000000000000000e0,7.5000000000000000e-1,,");

    let json_dir = t.path().join("j");
    assert!(expsup(&["laws", "--config", &cfg, "--out", json_dir.to_str().unwrap(), "--format", "json"]).status.success());
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(json_dir.join("laws.json")).unwrap()).unwrap();
    assert_eq!(rows[0]["sup_cdf"], 0.75);
    assert_eq!(rows[0]["i"], serde_json::Value::Null);
    let joint_csv: f64 = lines[2].split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(rows[1]["joint_cdf"].as_f64().unwrap(), joint_csv);
}

#[test]
fn empirical_laws_follow_the_seed() {
    let t = tempfile::tempdir().unwrap();
    let text = default_config().replace("empirical = false", "empirical = true").replace("n_paths = 100000", "n_paths = 2000");
    let cfg = write(t.path(), "e.toml", &text);
    let run = |seed: &str, dir: &str| {
        let d = t.path().join(dir);
        assert!(expsup(&["laws", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", seed]).status.success());
        fs::read_to_string(d.join("laws.csv")).unwrap()
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.lines().next().unwrap().ends_with("joint_emp,joint_se"));
}
