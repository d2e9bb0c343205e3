use thiserror::Error;

use crate::circfit::FitResult;

/// Errors produced by the simulation and analysis stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("phase undefined: both quadratures are zero")]
    UndefinedPhase,

    #[error("window selection failed: {0}")]
    WindowSelection(String),

    #[error("degenerate Voigt profile: sigma and gamma are both zero")]
    DegenerateProfile,

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("fit did not converge after {iterations} iterations (best S^2 = {})", best.s_squared)]
    NonConvergence {
        iterations: usize,
        best: Box<FitResult>,
    },

    #[error("bootstrap unstable: {failed} of {total} resamples failed to fit")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("threshold not found: {0}")]
    ThresholdNotFound(String),

    #[error("not a unit Stokes vector (norm {0})")]
    Normalization(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
