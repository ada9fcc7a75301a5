//! Optimal stopping of one-dimensional diffusions through expected suprema.
//!
//! A perpetual discounted problem `sup_τ E_x[e^{-rτ} g(X_τ)]` is rewritten as
//! `E_x[sup_{t≤T} f(X_t)]` with `T ~ Exp(r)` independent of `X`. This crate
//! builds the representation `f` for one-sided and two-sided stopping
//! regions, together with the laws of the running extremes and simulators
//! that check both.
//!
//! * [`diffusion`], [`fundamental`]: the diffusion and its `ψ`, `φ`;
//! * [`functionals`]: payoffs, the killed generator, resolvents;
//! * [`one_sided`], [`two_sided`]: the two stopping problems;
//! * [`laws`], [`sim`]: distributions of `(I_T, M_T)` and Monte Carlo.
//!
//! ```
//! use expsup::diffusion::DiffusionSpec;
//! use expsup::functionals::Payoff;
//! use expsup::fundamental::make_gbm_pair;
//! use expsup::two_sided::{solve_two_sided, TwoSidedConfig};
//!
//! let s = 0.1f64.sqrt();
//! let spec = DiffusionSpec::gbm(0.15, s, 0.4)?;
//! let pair = make_gbm_pair(0.15, s, 0.4)?;
//! let rep = solve_two_sided(&Payoff::max_with_floor(1.0), &pair, &spec, &TwoSidedConfig::default())?;
//! assert!(rep.z_star < 1.0 && 1.0 < rep.y_star);
//! # Ok::<(), expsup::error::Error>(())
//! ```

pub mod curve;
pub mod diffusion;
pub mod error;
pub mod functionals;
pub mod fundamental;
pub mod numerics;
pub mod one_sided;
pub mod special;
pub mod two_sided;
pub mod laws;
pub mod sim;

// The book's listings run as doctests: each chapter becomes the docs of an
// empty module.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fundamental.md")]
    mod fundamental {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/one_sided.md")]
    mod one_sided {}
    #[doc = include_str!("../../../book/src/two_sided.md")]
    mod two_sided {}
    #[doc = include_str!("../../../book/src/laws.md")]
    mod laws {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
