//! Distributions, risk budgets and change scenarios.
//!
//! Time is 1-based throughout: observations are `X_1, ..., X_T` and a change
//! point `nu` means `X_nu` is the first post-change sample.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_variance, QcdError, Result};

/// Gaussian observation model with known variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianModel {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let model = Self { mean, variance };
        model.validate()?;
        Ok(model)
    }

    /// Unit-variance model centred at `mean`.
    pub fn standard(mean: f64) -> Self {
        Self {
            mean,
            variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(QcdError::InvalidParameter {
                name: "mean",
                reason: format!("must be finite, got {}", self.mean),
            });
        }
        check_variance(self.variance)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// False-alarm and late-detection budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBudget {
    pub delta_f: f64,
    pub delta_d: f64,
}

impl RiskBudget {
    pub fn new(delta_f: f64, delta_d: f64) -> Result<Self> {
        check_probability("delta_f", delta_f)?;
        check_probability("delta_d", delta_d)?;
        Ok(Self { delta_f, delta_d })
    }
}

/// A single-change stream over a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeScenario {
    pub horizon: usize,
    /// `None` means the stream never changes.
    pub change_point: Option<usize>,
    pub pre_window: usize,
    pub pre: GaussianModel,
    pub post: GaussianModel,
}

impl ChangeScenario {
    /// Scenario without a change: every sample follows `pre`.
    pub fn no_change(horizon: usize, pre: GaussianModel) -> Self {
        Self {
            horizon,
            change_point: None,
            pre_window: 0,
            pre,
            post: pre,
        }
    }

    pub fn with_change_point(mut self, change_point: Option<usize>) -> Self {
        self.change_point = change_point;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_scenario(self)
    }

    pub fn change_gap(&self) -> f64 {
        change_gap(self)
    }

    /// Reject models whose variance differs from the variance a detector
    /// assumes, unless `allow_mismatch` is set.
    pub fn check_detector_variance(&self, sigma2: f64, allow_mismatch: bool) -> Result<()> {
        check_variance(sigma2)?;
        if allow_mismatch {
            return Ok(());
        }
        let mut models = vec![self.pre];
        if self.change_point.is_some() {
            models.push(self.post);
        }
        for model in models {
            if model.variance != sigma2 {
                return Err(QcdError::VarianceMismatch {
                    model: model.variance,
                    detector: sigma2,
                });
            }
        }
        Ok(())
    }
}

/// Check every scenario invariant, reporting the first violation.
pub fn validate_scenario(s: &ChangeScenario) -> Result<()> {
    if s.horizon < 1 {
        return Err(QcdError::EmptyHorizon);
    }
    s.pre.validate()?;
    s.post.validate()?;
    if let Some(nu) = s.change_point {
        if nu <= s.pre_window {
            return Err(QcdError::ChangeInsidePreWindow {
                change_point: nu,
                pre_window: s.pre_window,
            });
        }
        if nu > s.horizon {
            return Err(QcdError::ChangeAfterHorizon {
                change_point: nu,
                horizon: s.horizon,
            });
        }
        if change_gap(s) == 0.0 {
            return Err(QcdError::ZeroChangeGap(s.pre.mean));
        }
    }
    Ok(())
}

/// Absolute difference between pre- and post-change means.
pub fn change_gap(s: &ChangeScenario) -> f64 {
    (s.pre.mean - s.post.mean).abs()
}
