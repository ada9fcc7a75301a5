//! Problem configuration files.
//!
//! A config is a TOML document with a strict schema: unknown keys anywhere
//! are rejected, so a misspelt tolerance cannot silently fall back to its
//! default.

use std::path::{Path, PathBuf};

use expsup::diffusion::DiffusionSpec;
use expsup::functionals::{example_flow, Payoff};
use expsup::fundamental::{make_gbm_pair, make_logistic_pair, FundamentalPair};
use expsup::one_sided::OneSidedConfig;
use expsup::sim::PathSimConfig;
use expsup::two_sided::TwoSidedConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub diffusion: DiffusionConfig,
    pub payoff: PayoffConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: PathSimConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub laws: LawsConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    Gbm { mu: f64, sigma: f64, r: f64 },
    Logistic { mu: f64, gamma: f64, sigma: f64, r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// `π(x) = (x⁵ − 2)e^{−x} + 1`.
    Example,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    Call { k: f64 },
    CappedCall { k: f64, c: f64 },
    Straddle { k: f64 },
    CappedStraddle { k: f64, c: f64 },
    AsymCappedStraddle { c1: f64, k: f64, c2: f64 },
    MaxWithFloor { c: f64 },
    Resolvent { flow: Flow },
    /// Piecewise linear through `knots`, continued with the given slopes.
    Custom { knots: Vec<[f64; 2]>, left_slope: f64, right_slope: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneSided,
    TwoSided,
}

/// Tabulation grid; bounds left out are chosen from the solved thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { lo: None, hi: None, n: 50 }
    }
}

impl GridConfig {
    pub fn points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (lo, hi) = (self.lo.unwrap_or(lo), self.hi.unwrap_or(hi));
        if self.n < 2 {
            return vec![lo];
        }
        (0..self.n).map(|k| lo + (hi - lo) * k as f64 / (self.n - 1) as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: Mode,
    pub grid: GridConfig,
    pub one_sided: OneSidedConfig,
    pub two_sided: TwoSidedConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: Mode::TwoSided,
            grid: GridConfig::default(),
            one_sided: OneSidedConfig::default(),
            two_sided: TwoSidedConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Format,
    /// Directory receiving the output files.
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { format: Format::Csv, path: PathBuf::from("expsup-out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Points for the simulation check; empty picks points inside the
    /// continuation region.
    pub mc_points: Vec<f64>,
    /// Relative tolerance of the `J = V` check.
    pub j_tol: f64,
    /// Standard errors allowed for the simulation checks.
    pub mc_sigmas: f64,
    /// A simulation check whose `mc_sigmas·s.e.` band exceeds this fraction
    /// of the target (or, for probabilities, this absolute width) is
    /// reported inconclusive instead of judged.
    pub mc_max_rel_band: f64,
    pub signal_points: usize,
    /// Replaces the solved upper threshold before checking (fault injection).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_y_star: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            mc_points: Vec::new(),
            j_tol: 1e-5,
            mc_sigmas: 3.0,
            mc_max_rel_band: 0.05,
            signal_points: 10,
            inject_y_star: None,
        }
    }
}

/// One law probe; `i` and `m` are optional so that marginal-only probes are
/// possible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawsConfig {
    pub probes: Vec<Probe>,
    /// Also simulate and report empirical frequencies.
    pub empirical: bool,
}

impl Default for LawsConfig {
    fn default() -> Self {
        LawsConfig {
            probes: vec![
                Probe { x: 1.0, i: None, m: Some(2.0) },
                Probe { x: 2.0, i: Some(1.0), m: Some(4.0) },
                Probe { x: 2.0, i: Some(1.5), m: Some(3.0) },
            ],
            empirical: false,
        }
    }
}

impl Default for ProblemConfig {
    /// The minimum-guaranteed-payment problem `max(x, 1)` under GBM with
    /// `ψ = x²`, `φ = x⁻⁴`.
    fn default() -> Self {
        ProblemConfig {
            diffusion: DiffusionConfig::Gbm { mu: 0.15, sigma: 0.1f64.sqrt(), r: 0.4 },
            payoff: PayoffConfig::MaxWithFloor { c: 1.0 },
            solver: SolverConfig::default(),
            simulation: PathSimConfig::default(),
            output: OutputConfig::default(),
            verify: VerifyConfig::default(),
            laws: LawsConfig::default(),
        }
    }
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn build(&self) -> Result<Problem, CliError> {
        let bad = |e: expsup::error::Error| CliError::Config(e.to_string());
        let (spec, pair) = match self.diffusion {
            DiffusionConfig::Gbm { mu, sigma, r } => {
                (DiffusionSpec::gbm(mu, sigma, r).map_err(bad)?, make_gbm_pair(mu, sigma, r).map_err(bad)?)
            }
            DiffusionConfig::Logistic { mu, gamma, sigma, r } => (
                DiffusionSpec::logistic(mu, gamma, sigma, r).map_err(bad)?,
                make_logistic_pair(mu, gamma, sigma, r).map_err(bad)?,
            ),
        };
        let payoff = match &self.payoff {
            PayoffConfig::Call { k } => Payoff::call(*k),
            PayoffConfig::CappedCall { k, c } => Payoff::capped_call(*k, *c).map_err(bad)?,
            PayoffConfig::Straddle { k } => Payoff::straddle(*k).map_err(bad)?,
            PayoffConfig::CappedStraddle { k, c } => Payoff::capped_straddle(*k, *c).map_err(bad)?,
            PayoffConfig::AsymCappedStraddle { c1, k, c2 } => Payoff::asym_capped_straddle(*c1, *k, *c2).map_err(bad)?,
            PayoffConfig::MaxWithFloor { c } => Payoff::max_with_floor(*c),
            PayoffConfig::Resolvent { flow: Flow::Example } => {
                // the resolvent needs the pair; numeric failures here are not config errors
                Payoff::resolvent(example_flow(), &pair, &spec).map_err(|e| CliError::numeric("functionals::resolvent", e))?
            }
            PayoffConfig::Custom { knots, left_slope, right_slope } => {
                Payoff::piecewise_linear(knots.iter().map(|k| (k[0], k[1])).collect(), *left_slope, *right_slope)
                    .map_err(bad)?
            }
        };
        Ok(Problem { spec, pair, payoff })
    }
}

/// A config resolved into library objects.
pub struct Problem {
    pub spec: DiffusionSpec,
    pub pair: FundamentalPair,
    pub payoff: Payoff,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let d = ProblemConfig::default();
        assert_eq!(ProblemConfig::parse(&d.to_toml()).unwrap(), d);
        let mut c = d.clone();
        c.verify.inject_y_star = Some(1.3);
        c.laws.probes.push(Probe { x: 3.0, i: Some(2.0), m: None });
        c.payoff = PayoffConfig::Custom { knots: vec![[0.0, 1.0], [2.0, 3.0]], left_slope: 0.0, right_slope: 0.5 };
        assert_eq!(ProblemConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let base = ProblemConfig::default().to_toml();
        for (from, to) in [
            ("c = 1.0", "c = 1.0\nk = 2.0"),
            ("j_tol", "j_tolerance"),
            ("kind = \"gbm\"", "kind = \"gbm\"\ngamma = 0.5"),
            ("n_paths", "npaths"),
            ("y_nodes", "ynodes"),
            ("kind = \"max_with_floor\"", "kind = \"max_with_flor\""),
        ] {
            let text = base.replacen(from, to, 1);
            assert_ne!(text, base);
            assert!(matches!(ProblemConfig::parse(&text), Err(CliError::Config(_))), "accepted: {to}");
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ProblemConfig::parse("[diffusion]\nkind = \"gbm\"\nmu = 0.15\nsigma = 0.3\nr = 0.4\n[payoff]\nkind = \"call\"\nk = 3.0\n").unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.payoff, PayoffConfig::Call { k: 3.0 });
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let mut c = ProblemConfig::default();
        c.diffusion = DiffusionConfig::Gbm { mu: 0.5, sigma: 0.3, r: 0.4 };
        assert!(matches!(c.build(), Err(CliError::Config(_))));
        c.diffusion = DiffusionConfig::Gbm { mu: 0.15, sigma: 0.3, r: 0.4 };
        c.payoff = PayoffConfig::CappedCall { k: 3.0, c: -1.0 };
        assert!(matches!(c.build(), Err(CliError::Config(_))));
    }
}
