//! Time-varying detection thresholds.
//!
//! All logarithms are natural. The GSR thresholds are evaluated through the
//! identity `beta_gsr(n) = beta_glr(n) + ln n` rather than independently.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, QcdError, Result};

/// Threshold family used by a test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ThresholdKind {
    /// `ln(zeta(r) n^r / delta_f)`, `r > 1`.
    TvtCusum { r: f64 },
    GlrPost,
    GsrPost,
    GlrBoth,
    GsrBoth,
}

impl ThresholdKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdKind::TvtCusum { r } if !(r > 1.0 && r.is_finite()) => Err(QcdError::ZetaDivergent(r)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdKind::TvtCusum { .. } => "tvt-cusum",
            ThresholdKind::GlrPost => "glr-post",
            ThresholdKind::GsrPost => "gsr-post",
            ThresholdKind::GlrBoth => "glr-both",
            ThresholdKind::GsrBoth => "gsr-both",
        }
    }
}

// B_2, B_4, ..., B_12
const BERNOULLI: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// Riemann zeta function for real `r > 1` (Euler-Maclaurin summation).
pub fn zeta(r: f64) -> Result<f64> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(QcdError::ZetaDivergent(r));
    }
    const N: usize = 12;
    let nf = N as f64;
    let head: f64 = (1..N).rev().map(|i| (i as f64).powf(-r)).sum();
    let mut tail = nf.powf(1.0 - r) / (r - 1.0) + 0.5 * nf.powf(-r);
    // rising factorial r (r+1) ... (r+2j-2) / (2j)!, times N^{-r-2j+1}
    let mut coeff = r / 2.0;
    let mut power = nf.powf(-r - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        if j > 0 {
            let m = (2 * j) as f64;
            coeff *= (r + m - 1.0) * (r + m) / ((m + 1.0) * (m + 2.0));
            power /= nf * nf;
        }
        tail += b * coeff * power;
    }
    Ok(head + tail)
}

/// `3 ln(1 + ln n) + (5/4) ln(3 n^{3/2} / delta_f) + 11/2`
fn glr_post(n: f64, delta_f: f64) -> f64 {
    3.0 * (1.0 + n.ln()).ln() + 1.25 * (3.0 * n.powf(1.5) / delta_f).ln() + 5.5
}

/// `6 ln(1 + ln n) + (5/2) ln(4 n^{3/2} / delta_f) + 11`
fn glr_both(n: f64, delta_f: f64) -> f64 {
    6.0 * (1.0 + n.ln()).ln() + 2.5 * (4.0 * n.powf(1.5) / delta_f).ln() + 11.0
}

/// Threshold function with its constants resolved once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    kind: ThresholdKind,
    delta_f: f64,
    log_zeta: f64,
}

impl Threshold {
    pub fn new(kind: ThresholdKind, delta_f: f64) -> Result<Self> {
        kind.validate()?;
        check_probability("delta_f", delta_f)?;
        let log_zeta = match kind {
            ThresholdKind::TvtCusum { r } => zeta(r)?.ln(),
            _ => 0.0,
        };
        Ok(Self {
            kind,
            delta_f,
            log_zeta,
        })
    }

    pub fn kind(&self) -> ThresholdKind {
        self.kind
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Threshold at step `n >= 1`.
    pub fn at(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        let nf = n as f64;
        match self.kind {
            ThresholdKind::TvtCusum { r } => self.log_zeta + r * nf.ln() - self.delta_f.ln(),
            ThresholdKind::GlrPost => glr_post(nf, self.delta_f),
            ThresholdKind::GsrPost => glr_post(nf, self.delta_f) + nf.ln(),
            ThresholdKind::GlrBoth => glr_both(nf, self.delta_f),
            ThresholdKind::GsrBoth => glr_both(nf, self.delta_f) + nf.ln(),
        }
    }
}

pub fn threshold_value(kind: ThresholdKind, n: usize, delta_f: f64) -> Result<f64> {
    if n < 1 {
        return Err(QcdError::InvalidParameter {
            name: "n",
            reason: "threshold is defined for n >= 1".into(),
        });
    }
    Ok(Threshold::new(kind, delta_f)?.at(n))
}
