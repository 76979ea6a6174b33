use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("no data: estimate requested before any sample was accumulated")]
    NoData,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("absolute continuity violated on transition {transition}: perturbed rate is zero where the reference rate is positive")]
    AbsoluteContinuity { transition: String },

    #[error("absorbing state reached ({state}): total rate is zero")]
    AbsorbingState { state: String },

    #[error("gradient undefined: {0}")]
    UndefinedGradient(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("particles {first} and {second} coincide; pair direction undefined")]
    CoincidentParticles { first: usize, second: usize },

    #[error("chain is reducible: stationary law is not unique")]
    Reducible,

    #[error("truncation at x_max={x_max} leaves tail mass {tail:e}; use a larger cutoff")]
    TruncationTooSmall { x_max: usize, tail: f64 },

    #[error("path enumeration needs {paths} paths, above the bound {bound}")]
    EnumerationBound { paths: u128, bound: u128 },

    #[error("quadrature grid too short: missing kernel mass {missing:e} exceeds {bound:e}; extend the grid")]
    QuadratureTail { missing: f64, bound: f64 },

    #[error("model does not enumerate its transitions; use the realized-transition (H2) estimator")]
    NotEnumerable,

    #[error("model inconsistency: {0}")]
    Inconsistent(String),

    #[error("estimator hook failed: {0}")]
    Hook(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::AbsoluteContinuity { .. }
                | Error::AbsorbingState { .. }
                | Error::NonFinite { .. }
                | Error::CoincidentParticles { .. }
                | Error::UndefinedGradient(_)
                | Error::Reducible
                | Error::TruncationTooSmall { .. }
                | Error::QuadratureTail { .. }
                | Error::Inconsistent(_)
        )
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
