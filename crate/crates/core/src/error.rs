use thiserror::Error;

/// Errors raised by the detection library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum QcdError {
    #[error("variance must be strictly positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("change inside pre-window: change point {change_point} must exceed pre-window {pre_window}")]
    ChangeInsidePreWindow { change_point: usize, pre_window: usize },

    #[error("change point {change_point} lies beyond the horizon {horizon}")]
    ChangeAfterHorizon { change_point: usize, horizon: usize },

    #[error("zero change gap: pre- and post-change means are both {0}")]
    ZeroChangeGap(f64),

    #[error("model variance {model} differs from detector variance {detector}")]
    VarianceMismatch { model: f64, detector: f64 },

    #[error("{name} must lie in the open interval (0, 1), got {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing parameter {param} required by the {kind} detector")]
    MissingParameter { kind: &'static str, param: &'static str },

    #[error("segment [{start}, {end}] is outside the {len} observations seen")]
    IndexRange { start: usize, end: usize, len: usize },

    #[error("statistic needs at least {needed} observations, have {available}")]
    NotEnoughObservations { needed: usize, available: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("likelihood ratio must be positive, got {0}")]
    NonPositiveLikelihoodRatio(f64),

    #[error("zeta series diverges for r = {0} (requires r > 1)")]
    ZetaDivergent(f64),

    #[error("non-finite observation {value} at step {step}")]
    NonFiniteObservation { step: usize, value: f64 },

    #[error("detector was poisoned by an earlier error")]
    Poisoned,

    #[error("unwindowed GSR statistic is capped at {cap} steps (reached step {step})")]
    GsrHorizonCap { cap: usize, step: usize },

    #[error("pre-window too small: m = {pre_window} requires m > {required:.6}")]
    PreWindowTooSmall { pre_window: usize, required: f64 },

    #[error("{operation} does not apply to the {kind} test")]
    KindMismatch { operation: &'static str, kind: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl QcdError {
    /// True for errors caused by invalid parameters or configuration, as
    /// opposed to failures that surface while processing data.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            QcdError::NonFiniteObservation { .. }
                | QcdError::Poisoned
                | QcdError::GsrHorizonCap { .. }
                | QcdError::NonPositiveLikelihoodRatio(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, QcdError>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(QcdError::ProbabilityOutOfRange { name, value })
    }
}

pub(crate) fn check_variance(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(QcdError::NonPositiveVariance(sigma2))
    }
}
