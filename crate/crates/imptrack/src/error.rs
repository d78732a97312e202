use std::fmt;

/// Errors shared across the simulation and analysis layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix/vector dimensions incompatible for the requested operation.
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    /// A value that must be finite was NaN or infinite.
    NonFinite { context: String },
    /// State or derivative became non-finite during integration.
    IntegrationDiverged { t: f64 },
    /// A matrix required to be Hurwitz has an eigenvalue with
    /// real part >= 0; carries the offending max real part.
    NotHurwitz { margin: f64 },
    /// A direct linear solve hit a (numerically) singular system.
    SolveFailed { context: String },
    /// Iterative eigensolver did not settle within its budget.
    NoConvergence { iterations: usize },
    /// Not enough usable samples for a regression.
    TooFewSamples { have: usize, need: usize },
    /// Trajectory does not cover the requested measurement window.
    WindowTooShort { need_s: f64, have_s: f64 },
    /// Input channel carries no energy at the probe frequency.
    ZeroInput,
    /// Every candidate grid point violates the stability hypothesis.
    NoFeasiblePoint,
    /// Invalid parameter or configuration value; message carries the
    /// field path.
    InvalidParams(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { op, expected, got } => {
                write!(
                    f,
                    "{op}: dimension mismatch (expected {expected}, got {got})"
                )
            }
            Error::NonFinite { context } => write!(f, "non-finite value: {context}"),
            Error::IntegrationDiverged { t } => {
                write!(f, "integration diverged at t = {t}")
            }
            Error::NotHurwitz { margin } => {
                write!(
                    f,
                    "matrix is not Hurwitz (max eigenvalue real part = {margin})"
                )
            }
            Error::SolveFailed { context } => write!(f, "linear solve failed: {context}"),
            Error::NoConvergence { iterations } => {
                write!(
                    f,
                    "eigensolver did not converge within {iterations} iterations"
                )
            }
            Error::TooFewSamples { have, need } => {
                write!(f, "too few samples: have {have}, need {need}")
            }
            Error::WindowTooShort { need_s, have_s } => {
                write!(f, "window too short: need {need_s} s, have {have_s} s")
            }
            Error::ZeroInput => write!(f, "input channel has no energy at the probe frequency"),
            Error::NoFeasiblePoint => {
                write!(f, "no grid point satisfies the stability hypothesis")
            }
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
