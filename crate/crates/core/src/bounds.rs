//! Closed-form latency and pre-window guarantees.
//!
//! Every bound is computed in double precision and rounded up once at the end.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_variance, QcdError, Result};
use crate::thresholds::{Threshold, ThresholdKind};

/// Inputs shared by all bound evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub horizon: usize,
    pub delta_f: f64,
    pub delta_d: f64,
    pub sigma2: f64,
    pub gap: f64,
    /// Pre-change window; only the two-sided bounds read it.
    pub pre_window: usize,
    pub kind: ThresholdKind,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(QcdError::EmptyHorizon);
        }
        check_probability("delta_f", self.delta_f)?;
        check_probability("delta_d", self.delta_d)?;
        check_variance(self.sigma2)?;
        if !(self.gap > 0.0 && self.gap.is_finite()) {
            return Err(QcdError::InvalidParameter {
                name: "gap",
                reason: format!("must be positive, got {}", self.gap),
            });
        }
        Ok(())
    }

    /// `beta(T, delta_f)` for the configured test.
    pub fn beta(&self) -> Result<f64> {
        Ok(Threshold::new(self.kind, self.delta_f)?.at(self.horizon))
    }

    fn require(&self, operation: &'static str, two_sided: bool) -> Result<f64> {
        self.validate()?;
        let ok = match self.kind {
            ThresholdKind::GlrPost | ThresholdKind::GsrPost => !two_sided,
            ThresholdKind::GlrBoth | ThresholdKind::GsrBoth => two_sided,
            ThresholdKind::TvtCusum { .. } => false,
        };
        if !ok {
            return Err(QcdError::KindMismatch {
                operation,
                kind: self.kind.name(),
            });
        }
        self.beta()
    }
}

fn ceil_to_u64(v: f64) -> Result<u64> {
    if !v.is_finite() || v > u64::MAX as f64 {
        return Err(QcdError::InvalidParameter {
            name: "bound",
            reason: format!("not representable: {v}"),
        });
    }
    Ok(v.ceil().max(0.0) as u64)
}

/// Latency guarantee with known pre-change mean:
/// `ceil(2 sigma2 / gap^2 * (sqrt(beta) + sqrt(ln(2 / delta_d)))^2)`.
pub fn latency_bound_known_pre(b: &BoundInputs) -> Result<u64> {
    let beta = b.require("latency_bound_known_pre", false)?;
    let root = beta.sqrt() + (2.0 / b.delta_d).ln().sqrt();
    ceil_to_u64(2.0 * b.sigma2 / (b.gap * b.gap) * root * root)
}

fn prewindow_requirement(b: &BoundInputs, beta: f64) -> f64 {
    8.0 * b.sigma2 * beta / (b.gap * b.gap)
}

/// Smallest pre-change window the two-sided guarantee admits:
/// `ceil(8 sigma2 beta / gap^2)`.
pub fn min_prewindow(b: &BoundInputs) -> Result<u64> {
    let beta = b.require("min_prewindow", true)?;
    ceil_to_u64(prewindow_requirement(b, beta))
}

/// Latency guarantee with both means unknown, for pre-window `b.pre_window`.
///
/// Fails with [`QcdError::PreWindowTooSmall`] unless
/// `gap^2 m > 8 sigma2 beta`.
pub fn latency_bound_both_unknown(b: &BoundInputs) -> Result<u64> {
    let beta = b.require("latency_bound_both_unknown", true)?;
    let m = b.pre_window as f64;
    let c = 8.0 * b.sigma2 * beta;
    let denom = b.gap * b.gap * m - c;
    if denom <= 0.0 {
        return Err(QcdError::PreWindowTooSmall {
            pre_window: b.pre_window,
            required: prewindow_requirement(b, beta),
        });
    }
    let first = c * m / denom;
    let second = b.delta_f.powf(2.0 / 3.0) / (2f64.powf(16.0 / 15.0) * b.delta_d.powf(4.0 / 15.0)) - m;
    ceil_to_u64(first.max(second))
}

/// Pre-window that makes the two-sided tests logarithmic in every budget:
/// `ceil(16 sigma2 beta / gap^2 + ln(1 / delta_d))`.
pub fn prewindow_cor1(b: &BoundInputs) -> Result<u64> {
    let beta = b.require("prewindow_cor1", true)?;
    let m = ceil_to_u64(16.0 * b.sigma2 * beta / (b.gap * b.gap) + (1.0 / b.delta_d).ln())?;
    if b.delta_f <= b.delta_d {
        let d = latency_bound_both_unknown(&BoundInputs {
            pre_window: m as usize,
            ..*b
        })?;
        debug_assert!(d <= m, "latency {d} exceeds pre-window {m}");
    }
    Ok(m)
}

/// Parameter point of a latency measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub horizon: usize,
    pub delta_f: f64,
    pub delta_d: f64,
}

impl LatencyPoint {
    /// `ln T + ln(1/delta_f) + ln(1/delta_d)`
    pub fn log_scale(&self) -> f64 {
        (self.horizon as f64).ln() + (1.0 / self.delta_f).ln() + (1.0 / self.delta_d).ln()
    }
}

/// Tolerated growth of the latency-to-fit ratio along the horizon axis.
pub const GROWTH_TOLERANCE: f64 = 0.25;

/// Diagnostic for logarithmic latency growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property1Report {
    pub intercept: f64,
    pub slope: f64,
    /// `d / fit` per input point, in input order; infinite where the fit is not positive.
    pub ratios: Vec<f64>,
    /// Largest ratio over points with a positive fit.
    pub max_ratio: f64,
    /// Largest `ratio(T_max) / min ratio` over groups sharing `(delta_f, delta_d)`.
    pub horizon_growth: Option<f64>,
    pub super_logarithmic: bool,
}

/// Fit `d ~ a + b (ln T + ln 1/delta_f + ln 1/delta_d)` by ordinary least
/// squares and flag latencies whose ratio to the fit grows with `T`.
///
/// Within every group of points sharing `(delta_f, delta_d)` and spanning at
/// least two horizons, the ratio at the largest horizon is compared with the
/// smallest ratio in the group; growth beyond [`GROWTH_TOLERANCE`] (or a
/// non-positive fit at the largest horizon) raises the flag.
pub fn property1_check(latencies: &[(LatencyPoint, u64)]) -> Result<Property1Report> {
    let mut distinct: Vec<LatencyPoint> = Vec::new();
    for (p, _) in latencies {
        check_probability("delta_f", p.delta_f)?;
        check_probability("delta_d", p.delta_d)?;
        if p.horizon < 1 {
            return Err(QcdError::EmptyHorizon);
        }
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 3 {
        return Err(QcdError::InsufficientData(format!(
            "need at least 3 distinct parameter points, got {}",
            distinct.len()
        )));
    }
    let xs: Vec<f64> = latencies.iter().map(|(p, _)| p.log_scale()).collect();
    let ys: Vec<f64> = latencies.iter().map(|&(_, d)| d as f64).collect();
    let count = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / count;
    let y_mean = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx <= f64::EPSILON * x_mean.abs().max(1.0) {
        return Err(QcdError::InsufficientData(
            "all points share the same log scale".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;

    let ratios: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = intercept + slope * x;
            if fit > 0.0 {
                y / fit
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_ratio = ratios
        .iter()
        .copied()
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);

    let mut horizon_growth: Option<f64> = None;
    let mut visited: Vec<(u64, u64)> = Vec::new();
    for (p, _) in latencies {
        let key = (p.delta_f.to_bits(), p.delta_d.to_bits());
        if visited.contains(&key) {
            continue;
        }
        visited.push(key);
        let group: Vec<usize> = (0..latencies.len())
            .filter(|&i| {
                let q = latencies[i].0;
                (q.delta_f.to_bits(), q.delta_d.to_bits()) == key
            })
            .collect();
        let t_min = group.iter().map(|&i| latencies[i].0.horizon).min().unwrap();
        let t_max = group.iter().map(|&i| latencies[i].0.horizon).max().unwrap();
        if t_min == t_max {
            continue;
        }
        let top = group
            .iter()
            .filter(|&&i| latencies[i].0.horizon == t_max)
            .map(|&i| ratios[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let floor = group
            .iter()
            .map(|&i| ratios[i])
            .filter(|r| r.is_finite())
            .fold(f64::INFINITY, f64::min);
        let growth = top / floor;
        horizon_growth = Some(horizon_growth.map_or(growth, |g| g.max(growth)));
    }
    let super_logarithmic = horizon_growth.is_some_and(|g| !(g <= 1.0 + GROWTH_TOLERANCE));
    Ok(Property1Report {
        intercept,
        slope,
        ratios,
        max_ratio,
        horizon_growth,
        super_logarithmic,
    })
}
