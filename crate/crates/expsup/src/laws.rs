//! Laws of the running extremes at an independent exponential time.
//!
//! With `T ~ Exp(r)` independent of `X`, `M_T = sup_{t≤T} X_t` and
//! `I_T = inf_{t≤T} X_t` have
//!
//! ```text
//! P_x(M_T ≤ m) = 1 − ψ(x)/ψ(m),    P_x(I_T ≤ i) = φ(x)/φ(i),
//! P_x(I_T ≤ i, M_T ≤ m) = −ψ(x)/ψ(m) + φ̂_m(x)/φ̂_m(i) + ψ̂_i(x)/ψ̂_i(m).
//! ```

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::fundamental::FundamentalPair;
use crate::numerics::{integrate, QuadOpts};

fn ordered(pts: &[f64]) -> Result<()> {
    if pts.windows(2).all(|w| w[0] <= w[1]) && pts.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("points must be ordered, got {pts:?}")))
    }
}

/// `P_x(M_T ≤ m)`.
pub fn sup_cdf(pair: &FundamentalPair, x: f64, m: f64) -> Result<f64> {
    ordered(&[x, m])?;
    Ok(1.0 - pair.psi(x) / pair.psi(m))
}

/// `P_x(I_T ≤ i)`.
pub fn inf_cdf(pair: &FundamentalPair, x: f64, i: f64) -> Result<f64> {
    ordered(&[i, x])?;
    Ok(pair.phi(x) / pair.phi(i))
}

/// `P_x(I_T ≤ i, M_T ≤ m)`.
pub fn joint_cdf(pair: &FundamentalPair, x: f64, i: f64, m: f64) -> Result<f64> {
    ordered(&[i, x, m])?;
    if i == x {
        return sup_cdf(pair, x, m);
    }
    if x == m {
        return Ok(0.0);
    }
    let v = -pair.psi(x) / pair.psi(m) + pair.phi_hat(m, x) / pair.phi_hat(m, i) + pair.psi_hat(i, x) / pair.psi_hat(i, m);
    Ok(v.clamp(0.0, 1.0))
}

/// `P_x(I_T ≥ i, M_T ≤ m)`: the process stays in `[i, m]` up to `T`.
pub fn interior_survival(pair: &FundamentalPair, x: f64, i: f64, m: f64) -> Result<f64> {
    ordered(&[i, x, m])?;
    Ok(1.0 - pair.psi_hat(i, x) / pair.psi_hat(i, m) - pair.phi_hat(m, x) / pair.phi_hat(m, i))
}

/// Density of `I_T` on `{M_T < y}`: `P_x(I_T ∈ di, M_T < y)/di` for `i < x < y`.
pub fn inf_density_below(pair: &FundamentalPair, x: f64, i: f64, y: f64) -> Result<f64> {
    ordered(&[i, x, y])?;
    let ph = pair.phi_hat(y, i);
    Ok((-pair.wronskian() * pair.s_prime(i) - pair.phi_hat_prime(y, i)) * pair.phi_hat(y, x) / (ph * ph))
}

/// Density of `M_T` on `{I_T > z}`: `P_x(I_T > z, M_T ∈ dm)/dm` for `z < x < m`.
pub fn sup_density_above(pair: &FundamentalPair, x: f64, z: f64, m: f64) -> Result<f64> {
    ordered(&[z, x, m])?;
    let ps = pair.psi_hat(z, m);
    Ok((-pair.wronskian() * pair.s_prime(m) + pair.psi_hat_prime(z, m)) * pair.psi_hat(z, x) / (ps * ps))
}

/// Density of `X̂_T` given `M̂_T = v` for the process killed at `i`.
pub fn conditional_density_given_sup(pair: &FundamentalPair, spec: &DiffusionSpec, i: f64, v: f64, y: f64) -> Result<f64> {
    ordered(&[i, y, v])?;
    if i == v {
        return Err(Error::DomainError("empty interval".into()));
    }
    let den = pair.psi_hat_prime(i, v) / pair.s_prime(v) - pair.wronskian();
    Ok(spec.r() * pair.psi_hat(i, y) * pair.m_prime(y) / den)
}

/// Density of `X̂_T` given `Î_T = u` for the process killed at `v`.
pub fn conditional_density_given_inf(pair: &FundamentalPair, spec: &DiffusionSpec, u: f64, v: f64, y: f64) -> Result<f64> {
    ordered(&[u, y, v])?;
    if u == v {
        return Err(Error::DomainError("empty interval".into()));
    }
    let den = -pair.wronskian() - pair.phi_hat_prime(v, u) / pair.s_prime(u);
    Ok(spec.r() * pair.phi_hat(v, y) * pair.m_prime(y) / den)
}

/// `E[h(X̂_T) | M̂_T = v]` for the process killed at `i`.
pub fn conditional_expectation_given_sup<H: Fn(f64) -> f64>(
    h: H,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    i: f64,
    v: f64,
    breaks: &[f64],
) -> Result<f64> {
    ordered(&[i, v])?;
    let den = pair.psi_hat_prime(i, v) / pair.s_prime(v) - pair.wronskian();
    let num = integrate(|y| h(y) * pair.psi_hat(i, y) * pair.m_prime(y), i, v, breaks, &QuadOpts::tight())?;
    Ok(spec.r() * num / den)
}

/// `E[h(X̂_T) | Î_T = u]` for the process killed at `v`.
pub fn conditional_expectation_given_inf<H: Fn(f64) -> f64>(
    h: H,
    pair: &FundamentalPair,
    spec: &DiffusionSpec,
    u: f64,
    v: f64,
    breaks: &[f64],
) -> Result<f64> {
    ordered(&[u, v])?;
    let den = -pair.wronskian() - pair.phi_hat_prime(v, u) / pair.s_prime(u);
    let num = integrate(|y| h(y) * pair.phi_hat(v, y) * pair.m_prime(y), u, v, breaks, &QuadOpts::tight())?;
    Ok(spec.r() * num / den)
}

/// The three extremal laws bundled with their pair.
#[derive(Clone, Debug)]
pub struct ExtremalLaw {
    pair: FundamentalPair,
}

impl ExtremalLaw {
    pub fn new(pair: FundamentalPair) -> Self {
        ExtremalLaw { pair }
    }

    pub fn sup_cdf(&self, x: f64, m: f64) -> Result<f64> {
        sup_cdf(&self.pair, x, m)
    }

    pub fn inf_cdf(&self, x: f64, i: f64) -> Result<f64> {
        inf_cdf(&self.pair, x, i)
    }

    pub fn joint_cdf(&self, x: f64, i: f64, m: f64) -> Result<f64> {
        joint_cdf(&self.pair, x, i, m)
    }

    pub fn inf_density_below(&self, x: f64, i: f64, y: f64) -> Result<f64> {
        inf_density_below(&self.pair, x, i, y)
    }

    pub fn sup_density_above(&self, x: f64, z: f64, m: f64) -> Result<f64> {
        sup_density_above(&self.pair, x, z, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::make_gbm_pair;

    fn pair() -> FundamentalPair {
        make_gbm_pair(0.15, 0.1f64.sqrt(), 0.4).unwrap()
    }

    #[test]
    fn plug_in_values() {
        let p = pair();
        assert!((sup_cdf(&p, 1.0, 2.0).unwrap() - 0.75).abs() < 1e-14);
        assert!((inf_cdf(&p, 2.0, 1.0).unwrap() - 0.0625).abs() < 1e-14);
        let expected = -0.25 + 0.984375 / 15.99609375 + 3.9375 / 15.99609375;
        assert!((joint_cdf(&p, 2.0, 1.0, 4.0).unwrap() - expected).abs() < 1e-12);
        assert!(sup_cdf(&p, 2.0, 1.0).is_err());
    }

    #[test]
    fn survival_decomposition() {
        let p = pair();
        for &(x, i, m) in &[(2.0, 1.0, 4.0), (1.1, 0.3, 1.2), (5.0, 4.9, 9.0)] {
            let lhs = joint_cdf(&p, x, i, m).unwrap() + interior_survival(&p, x, i, m).unwrap();
            assert!((lhs - sup_cdf(&p, x, m).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_integrate_to_marginals() {
        let p = pair();
        let (x, y) = (2.0, 4.0);
        // ∫_a^x P(I ∈ di, M < y) = P(M < y)
        let mass = integrate(|i| inf_density_below(&p, x, i, y).unwrap(), 0.0, x, &[], &QuadOpts::tight()).unwrap();
        assert!((mass - sup_cdf(&p, x, y).unwrap()).abs() < 1e-9, "{mass}");
        let z = 1.0;
        let mass = integrate(|m| sup_density_above(&p, x, z, m).unwrap(), x, f64::INFINITY, &[], &QuadOpts::tight()).unwrap();
        assert!((mass - (1.0 - inf_cdf(&p, x, z).unwrap())).abs() < 1e-9, "{mass}");
    }
}
