use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical routines and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("radius left the admissible band (r = {r:.6e}) at t = {t:.6e}")]
    RBlowup { t: f64, r: f64 },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepFailure { t: f64, h: f64 },

    #[error("Hill region is not compact: {0}")]
    NotCompact(String),

    #[error("turning points not bracketed: {0}")]
    TurningPointFailure(String),

    #[error("periodic orbit did not close: residual {residual:.3e}")]
    PeriodFailure { residual: f64 },

    #[error("quadrature did not reach tolerance: estimate {estimate:.3e} > {tolerance:.3e} ({what})")]
    Quadrature {
        what: &'static str,
        estimate: f64,
        tolerance: f64,
    },

    #[error("shooting function has no sign change on [{lo:.6}, {hi:.6}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("z-symmetry residual {residual:.3e} exceeds {tolerance:.1e}")]
    SymmetryResidual { residual: f64, tolerance: f64 },

    #[error("tangential section crossing at t = {t:.6e} (|p_z| = {pz:.3e})")]
    TangentialCrossing { t: f64, pz: f64 },

    #[error("point too close to the section boundary (radicand {radicand:.3e})")]
    BoundaryTooClose { radicand: f64 },

    #[error("no return to the section before t = {t_cap:.4e}")]
    NoReturn { t_cap: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
