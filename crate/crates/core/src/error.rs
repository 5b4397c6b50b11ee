use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain has no interior grid points at h = {h}")]
    EmptyDomain { h: f64 },

    #[error("h = {h} exceeds epsilon0/8 = {limit}")]
    PaddingTooSmall { h: f64, limit: f64 },

    #[error("parity class {class} of the core set has {components} connected components (need exactly 1)")]
    DisconnectedParityClass { class: u8, components: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("cap search exceeded k = {limit} without reaching the velocity cap")]
    CapSearchOverflow { limit: usize },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("CFL violated: minimum Lax-Friedrichs coefficient {min_coeff:e}")]
    CflViolation { min_coeff: f64 },

    #[error("density left [{lower}, {upper}]: observed [{min}, {max}]")]
    BoundsViolation {
        lower: f64,
        upper: f64,
        min: f64,
        max: f64,
    },

    #[error("assembly shape mismatch: {0}")]
    AssemblyShape(String),

    #[error("test function support reaches {count} point(s) of Omega_h outside the core set")]
    TestFunctionSupport { count: usize },

    #[error("test function is not divergence free: max |div| = {max_div:e}")]
    NotDivergenceFree { max_div: f64 },

    #[error("lemma check failed: {lemma} (relative error {error:e}); reproduction data: {reproduction}")]
    LemmaViolation {
        lemma: String,
        error: f64,
        reproduction: String,
    },

    #[error("step contract violated at n = {step}: {what}")]
    Contract { step: usize, what: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True when the error signals a broken numerical contract (as opposed to
    /// bad input or I/O). The CLI maps these to exit status 2.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            Error::CapSearchOverflow { .. }
                | Error::SolveFailure(_)
                | Error::CflViolation { .. }
                | Error::BoundsViolation { .. }
                | Error::AssemblyShape(_)
                | Error::LemmaViolation { .. }
                | Error::Contract { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
