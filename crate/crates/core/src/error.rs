use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("state escapes the grid: {0}")]
    SupportEscape(String),

    #[error("positivity violated: minimum eigenvalue {0:.3e}")]
    PositivityViolated(f64),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("ensemble degenerate (effective sample size {0:.2}); resample needed")]
    Degenerate(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("time step mismatch: expected {expected}, got {got}")]
    StepMismatch { expected: f64, got: f64 },

    #[error("measurement record is undefined for zero measurement strength")]
    NoRecord,

    #[error("Gaussian closure broke down: {0}")]
    ClosureBreakdown(String),

    #[error("trajectory does not recur; supply the action scale explicitly")]
    NonRecurrent,

    #[error("time step too large: {0}")]
    StepTooLarge(String),

    #[error("state estimator diverged: {0}")]
    EstimatorDiverged(String),
}

impl Error {
    /// True for failures of the integration itself rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SupportEscape(_)
                | Error::PositivityViolated(_)
                | Error::Degenerate(_)
                | Error::ClosureBreakdown(_)
                | Error::EstimatorDiverged(_)
                | Error::StepTooLarge(_)
        )
    }
}
