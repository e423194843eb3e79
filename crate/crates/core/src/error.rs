use std::path::PathBuf;

/// Errors raised by model evaluation, integration and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The singular-arc co-state system is too close to singular to solve.
    #[error("ill-conditioned singular-arc system: row-scaled det = {det:e}, condition ≈ {cond:e}")]
    IllConditioned { det: f64, cond: f64 },

    #[error("singular throttle denominator <λ, D> = {value:e} is below threshold")]
    SingularDenominator { value: f64 },

    #[error("determinant-transport denominator = {value:e} is below threshold (α = 0 arc)")]
    DegenerateArc { value: f64 },

    #[error("{source} (at t = {t:.6} s)")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite state at t = {t:.6} s: {state}")]
    NonFinite { t: f64, state: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid arc schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no feasible schedule found over {starts} start(s); best terminal residual {best_residual:e}")]
    Infeasible { starts: usize, best_residual: f64 },
}

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            e @ (Error::AtTime { .. } | Error::NonFinite { .. }) => e,
            e => Error::AtTime { t, source: Box::new(e) },
        }
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
