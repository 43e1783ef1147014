//! Running prefix sums and closed-form change statistics.
//!
//! The generalized statistics are never evaluated as density products. For
//! Gaussian likelihoods with common variance the inner suprema collapse onto
//! empirical means, so every candidate change index costs O(1) given prefix
//! sums:
//!
//! * post-change only: `(n - k + 1) * kl(mean(k..n), mu0)`
//! * pre and post:     `k * kl(mean(1..k), mean(1..n)) + (n - k) * kl(mean(k+1..n), mean(1..n))`
//!
//! GSR-type statistics are sums of exponentials of the same terms and are
//! reported in log space.

pub(crate) mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_variance, QcdError, Result};

/// Prefix sums of the observations seen so far.
///
/// `cumsum()[i]` is the sum of `X_1..X_i`; `cumsum()[0] == 0`. Sums are
/// accumulated with Neumaier compensation so that segment means stay accurate
/// over long horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixState {
    cumsum: Vec<f64>,
    sum: f64,
    compensation: f64,
}

impl Default for PrefixState {
    fn default() -> Self {
        Self::new()
    }
}

impl PrefixState {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let mut cumsum = Vec::with_capacity(capacity + 1);
        cumsum.push(0.0);
        Self {
            cumsum,
            sum: 0.0,
            compensation: 0.0,
        }
    }

    pub fn from_observations<I: IntoIterator<Item = f64>>(xs: I) -> Self {
        let mut state = Self::new();
        for x in xs {
            state.push(x);
        }
        state
    }

    pub fn push(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.cumsum.push(self.sum + self.compensation);
    }

    /// Number of observations seen.
    pub fn len(&self) -> usize {
        self.cumsum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cumsum(&self) -> &[f64] {
        &self.cumsum
    }

    /// Mean of `X_k..X_n` (1-based, inclusive).
    pub fn segment_mean(&self, k: usize, n: usize) -> Result<f64> {
        if k < 1 || k > n || n > self.len() {
            return Err(QcdError::IndexRange {
                start: k,
                end: n,
                len: self.len(),
            });
        }
        Ok(self.mean_unchecked(k, n))
    }

    #[inline]
    pub(crate) fn mean_unchecked(&self, k: usize, n: usize) -> f64 {
        (self.cumsum[n] - self.cumsum[k - 1]) / (n - k + 1) as f64
    }
}

/// Functional form of [`PrefixState::push`].
pub fn prefix_append(state: &PrefixState, x: f64) -> PrefixState {
    let mut next = state.clone();
    next.push(x);
    next
}

/// Which candidate change indices enter a statistic.
///
/// `Last(w)` keeps only indices `k >= n - w`; the two-sided split index is
/// additionally capped at `n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub enum Window {
    Full,
    Last(usize),
}

impl Window {
    pub fn validate(self) -> Result<()> {
        match self {
            Window::Last(0) => Err(QcdError::InvalidParameter {
                name: "window",
                reason: "must be at least 1".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Candidate range for the post-change statistics at step `n >= 1`.
    pub fn post_range(self, n: usize) -> (usize, usize) {
        let lo = match self {
            Window::Full => 1,
            Window::Last(w) => n.saturating_sub(w).max(1),
        };
        (lo, n)
    }

    /// Admissible split range for the two-sided statistics, empty when n < 2.
    pub fn split_range(self, n: usize) -> Option<(usize, usize)> {
        if n < 2 {
            return None;
        }
        let lo = match self {
            Window::Full => 1,
            Window::Last(w) => n.saturating_sub(w).max(1),
        };
        Some((lo, n - 1))
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Full => f.write_str("full"),
            Window::Last(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for Window {
    type Err = QcdError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Window::Full);
        }
        let w: usize = s.parse().map_err(|_| QcdError::InvalidParameter {
            name: "window",
            reason: format!("expected \"full\" or a positive integer, got {s:?}"),
        })?;
        let window = Window::Last(w);
        window.validate()?;
        Ok(window)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Size(usize),
    Tag(String),
}

impl TryFrom<WindowRepr> for Window {
    type Error = QcdError;

    fn try_from(repr: WindowRepr) -> Result<Self> {
        match repr {
            WindowRepr::Size(w) => {
                let window = Window::Last(w);
                window.validate()?;
                Ok(window)
            }
            WindowRepr::Tag(s) => s.parse(),
        }
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        match w {
            Window::Full => WindowRepr::Tag("full".into()),
            Window::Last(w) => WindowRepr::Size(w),
        }
    }
}

#[inline]
pub(crate) fn kl(x: f64, y: f64, sigma2: f64) -> f64 {
    let d = x - y;
    d * d / (2.0 * sigma2)
}

/// KL divergence between two Gaussians with common variance `sigma2`.
pub fn kl_gauss(x: f64, y: f64, sigma2: f64) -> Result<f64> {
    check_variance(sigma2)?;
    Ok(kl(x, y, sigma2))
}

/// Gaussian log-likelihood ratio `log f_{mu1}(x) / f_{mu0}(x)`.
pub fn llr_gauss(x: f64, mu0: f64, mu1: f64, sigma2: f64) -> Result<f64> {
    check_variance(sigma2)?;
    Ok(llr_unchecked(x, mu0, mu1, sigma2))
}

#[inline]
pub(crate) fn llr_unchecked(x: f64, mu0: f64, mu1: f64, sigma2: f64) -> f64 {
    ((mu1 - mu0) * x + (mu0 * mu0 - mu1 * mu1) / 2.0) / sigma2
}

/// CuSum recursion; start from `C_0 = 0`.
pub fn cusum_update(c_prev: f64, llr: f64) -> f64 {
    c_prev.max(0.0) + llr
}

/// Shiryaev-Roberts recursion on the raw scale; start from `S_0 = 0`.
pub fn sr_update(s_prev: f64, lr: f64) -> Result<f64> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(QcdError::NonPositiveLikelihoodRatio(lr));
    }
    Ok((s_prev + 1.0) * lr)
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(v)))`, shifted by the maximum.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(QcdError::EmptyInput);
    }
    Ok(logsumexp_iter(values.iter().copied()))
}

pub(crate) fn logsumexp_iter<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log generalized likelihood ratio of a change at `k` with known pre-change
/// mean: `(n - k + 1) * kl(mean(k..n), mu0)`.
#[inline]
pub(crate) fn post_term(state: &PrefixState, k: usize, n: usize, mu0: f64, sigma2: f64) -> f64 {
    (n - k + 1) as f64 * kl(state.mean_unchecked(k, n), mu0, sigma2)
}

/// Log generalized likelihood ratio of a split after `k`, both means unknown.
#[inline]
pub(crate) fn split_term(state: &PrefixState, k: usize, n: usize, sigma2: f64) -> f64 {
    let overall = state.mean_unchecked(1, n);
    let left = state.mean_unchecked(1, k);
    let right = state.mean_unchecked(k + 1, n);
    k as f64 * kl(left, overall, sigma2) + (n - k) as f64 * kl(right, overall, sigma2)
}

fn check_common(state: &PrefixState, sigma2: f64, window: Window, needed: usize) -> Result<()> {
    check_variance(sigma2)?;
    window.validate()?;
    if state.len() < needed {
        return Err(QcdError::NotEnoughObservations {
            needed,
            available: state.len(),
        });
    }
    Ok(())
}

/// GLR statistic with known pre-change mean `mu0` and unknown post-change mean.
pub fn glr_post_stat(state: &PrefixState, mu0: f64, sigma2: f64, window: Window) -> Result<f64> {
    check_common(state, sigma2, window, 1)?;
    let n = state.len();
    let (lo, hi) = window.post_range(n);
    Ok((lo..=hi)
        .map(|k| post_term(state, k, n, mu0, sigma2))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Log of the generalized Shiryaev-Roberts statistic with known `mu0`.
pub fn gsr_post_logstat(state: &PrefixState, mu0: f64, sigma2: f64, window: Window) -> Result<f64> {
    check_common(state, sigma2, window, 1)?;
    let n = state.len();
    let (lo, hi) = window.post_range(n);
    Ok(logsumexp_iter((lo..=hi).map(|k| post_term(state, k, n, mu0, sigma2))))
}

/// GLR statistic with both means unknown; splits `k` range over `1..n-1`.
pub fn glr_both_stat(state: &PrefixState, sigma2: f64, window: Window) -> Result<f64> {
    check_common(state, sigma2, window, 2)?;
    let n = state.len();
    let (lo, hi) = window.split_range(n).expect("n >= 2");
    Ok((lo..=hi)
        .map(|k| split_term(state, k, n, sigma2))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Log of the generalized Shiryaev-Roberts statistic with both means unknown.
pub fn gsr_both_logstat(state: &PrefixState, sigma2: f64, window: Window) -> Result<f64> {
    gsr_both_logstat_with(state, sigma2, window, false)
}

/// As [`gsr_both_logstat`]; `include_degenerate_split` adds the unit term of
/// the empty post-change segment (`k = n`).
pub fn gsr_both_logstat_with(
    state: &PrefixState,
    sigma2: f64,
    window: Window,
    include_degenerate_split: bool,
) -> Result<f64> {
    check_common(state, sigma2, window, 2)?;
    let n = state.len();
    let (lo, hi) = window.split_range(n).expect("n >= 2");
    let terms = (lo..=hi).map(|k| split_term(state, k, n, sigma2));
    if include_degenerate_split {
        Ok(logsumexp_iter(terms.chain(std::iter::once(0.0))))
    } else {
        Ok(logsumexp_iter(terms))
    }
}

#[cfg(test)]
mod tests;
