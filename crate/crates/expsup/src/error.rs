use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature failed on [{lo}, {hi}]: {reason}")]
    QuadratureFailure { lo: f64, hi: f64, reason: String },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid parameter: {0}")]
    ParamError(String),

    #[error("series did not converge within {terms} terms (a={a}, b={b}, z={z})")]
    SeriesDivergence { a: f64, b: f64, z: f64, terms: usize },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("monotonicity failure: {0}")]
    MonotonicityFailure(String),

    #[error("degenerate denominator at z={z}, y={y}")]
    DegenerateDenominator { z: f64, y: f64 },

    #[error("boundary term psi'/S' at the lower boundary is unknown; supply it explicitly")]
    BoundaryTermUnknown,

    #[error("payoff is nowhere positive on the search range")]
    NoPositiveSet,

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("g/psi does not vanish towards the upper boundary: {0}")]
    LimitViolation(String),

    #[error("neither the interior nor the corner branch closes: {0}")]
    NoInteriorRoot(String),

    #[error("generator has {found} sign changes, expected 2")]
    ShapeViolation { found: usize },

    #[error("lost the root while tracing the curve at {at} (last good node {last_good})")]
    RootLost { at: f64, last_good: f64 },

    #[error("curve is not monotone near {at}")]
    NonMonotoneCurve { at: f64 },

    #[error("closed and integral formulas disagree at {at}: {closed} vs {integral}")]
    MismatchError { at: f64, closed: f64, integral: f64 },

    #[error("grid too coarse: several sign changes between {lo} and {hi}")]
    GridTooCoarse { lo: f64, hi: f64 },

    #[error("simulation scheme error: {0}")]
    SchemeError(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::DomainError(_) => "DomainError",
            Error::ParamError(_) => "ParamError",
            Error::SeriesDivergence { .. } => "SeriesDivergence",
            Error::NotSupported(_) => "NotSupported",
            Error::OdeFailure(_) => "ODEFailure",
            Error::MonotonicityFailure(_) => "MonotonicityFailure",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::BoundaryTermUnknown => "BoundaryTermUnknown",
            Error::NoPositiveSet => "NoPositiveSet",
            Error::NoRoot(_) => "NoRoot",
            Error::LimitViolation(_) => "LimitViolation",
            Error::NoInteriorRoot(_) => "NoInteriorRoot",
            Error::ShapeViolation { .. } => "ShapeViolation",
            Error::RootLost { .. } => "RootLost",
            Error::NonMonotoneCurve { .. } => "NonMonotoneCurve",
            Error::MismatchError { .. } => "MismatchError",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::SchemeError(_) => "SchemeError",
        }
    }
}
