//! Crate-wide error type.

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("degenerate frame at {point:?}: {detail}")]
    DegenerateFrame { point: [f64; 3], detail: String },

    #[error("Reeb override violates its defining identities at {point:?}: {detail}")]
    ReebOverrideInconsistent { point: [f64; 3], detail: String },

    #[error("singular basis at {point:?}")]
    SingularBasis { point: [f64; 3] },

    #[error("time {t} outside span [{a}, {b}]")]
    OutOfSpan { t: f64, a: f64, b: f64 },

    #[error("integration failure at t = {t}: {detail}")]
    IntegrationFailure { t: f64, detail: String },

    #[error("shooting did not converge to {target:?}; best residual {best_residual:.3e}")]
    ShootingFailed { target: [f64; 3], best_residual: f64 },

    #[error("target {point:?} outside the chart box")]
    OutsideChartBox { point: [f64; 3] },

    #[error("point is not a smooth point of the distance: {detail}")]
    NotSmoothPoint { detail: String },

    #[error("direct method infeasible: endpoint mismatch {mismatch:.3e} above threshold")]
    Infeasible { mismatch: f64 },

    #[error("coefficient sequence is noise-dominated: {detail}")]
    NoiseDominated { detail: String },

    #[error("normal-coordinate chart flag missing on structure '{structure}'")]
    NormalChartMissing { structure: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
