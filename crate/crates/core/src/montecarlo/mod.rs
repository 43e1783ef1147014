//! Deterministic Monte Carlo estimation of latency and false-alarm rates.
//!
//! Trials are independent; every trial draws its stream from a seed that is a
//! pure function of the base seed, the grid position and the trial index, so
//! reports do not depend on the number of worker threads.

mod seed;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{latency_bound_both_unknown, latency_bound_known_pre, BoundInputs};
use crate::detectors::{make_detector, DetectorKind, TestKind};
use crate::error::{check_probability, QcdError, Result};
use crate::model::{ChangeScenario, GaussianModel};
use crate::stats::Window;

pub use seed::{mix, splitmix64, NO_CHANGE_STREAM};

/// Lazily generated observations of a scenario.
///
/// `X_n = mean + sd * Z_n` with `Z_n` standard normal draws (ziggurat) from a
/// `ChaCha8Rng` seeded by `seed_from_u64(seed)`.
#[derive(Debug, Clone)]
pub struct SeriesGenerator {
    rng: ChaCha8Rng,
    scenario: ChangeScenario,
    n: usize,
}

impl SeriesGenerator {
    pub fn new(scenario: ChangeScenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scenario,
            n: 0,
        })
    }
}

impl Iterator for SeriesGenerator {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.n >= self.scenario.horizon {
            return None;
        }
        self.n += 1;
        let model = match self.scenario.change_point {
            Some(nu) if self.n >= nu => self.scenario.post,
            _ => self.scenario.pre,
        };
        let z: f64 = StandardNormal.sample(&mut self.rng);
        Some(model.mean + model.std_dev() * z)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.scenario.horizon - self.n;
        (left, Some(left))
    }
}

pub fn generate_series(scenario: &ChangeScenario, seed: u64) -> Result<Vec<f64>> {
    Ok(SeriesGenerator::new(*scenario, seed)?.collect())
}

/// Classification of a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialOutcome {
    /// `fired_at - nu`.
    Delay(usize),
    /// Fired before the change (or at all, without a change).
    FalseAlarm,
    /// Never fired within the horizon.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub change_point: Option<usize>,
    pub fired_at: Option<usize>,
    pub outcome: TrialOutcome,
}

pub fn classify(change_point: Option<usize>, fired_at: Option<usize>) -> TrialOutcome {
    match (fired_at, change_point) {
        (None, _) => TrialOutcome::Censored,
        (Some(_), None) => TrialOutcome::FalseAlarm,
        (Some(t), Some(nu)) if t < nu => TrialOutcome::FalseAlarm,
        (Some(t), Some(nu)) => TrialOutcome::Delay(t - nu),
    }
}

/// Anything that can be run over a stream to produce a first alarm time.
pub trait StoppingRule: Sync {
    /// First 1-based step at which the rule fires, or `None` if the samples
    /// run out first.
    fn first_alarm(&self, samples: &mut dyn Iterator<Item = f64>, change_point: Option<usize>) -> Result<Option<usize>>;
}

/// A detector configuration paired with its false-alarm budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSetup {
    pub kind: DetectorKind,
    pub delta_f: f64,
}

impl StoppingRule for DetectorSetup {
    fn first_alarm(&self, samples: &mut dyn Iterator<Item = f64>, _change_point: Option<usize>) -> Result<Option<usize>> {
        let mut det = make_detector(self.kind, self.delta_f)?;
        for x in samples {
            if let Some(n) = det.advance(x)? {
                return Ok(Some(n));
            }
        }
        Ok(None)
    }
}

/// Test hook: fires exactly `delay` steps after the change point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleDelay(pub usize);

impl StoppingRule for OracleDelay {
    fn first_alarm(&self, samples: &mut dyn Iterator<Item = f64>, change_point: Option<usize>) -> Result<Option<usize>> {
        let Some(nu) = change_point else {
            return Ok(None);
        };
        let target = nu + self.0;
        Ok((samples.take(target).count() == target).then_some(target))
    }
}

pub fn run_trial(rule: &dyn StoppingRule, scenario: &ChangeScenario, seed: u64) -> Result<TrialRecord> {
    let mut samples = SeriesGenerator::new(*scenario, seed)?;
    let fired_at = rule.first_alarm(&mut samples, scenario.change_point)?;
    Ok(TrialRecord {
        seed,
        change_point: scenario.change_point,
        fired_at,
        outcome: classify(scenario.change_point, fired_at),
    })
}

/// `{m + 1 + floor(n T / 10) : n >= 0} ∩ [1, T]`, increasing, without repeats.
pub fn changepoint_grid(horizon: usize, pre_window: usize) -> Result<Vec<usize>> {
    if pre_window >= horizon {
        return Err(QcdError::ChangeAfterHorizon {
            change_point: pre_window + 1,
            horizon,
        });
    }
    let mut grid = Vec::new();
    for n in 0.. {
        let nu = pre_window + 1 + n * horizon / 10;
        if nu > horizon {
            break;
        }
        if grid.last() != Some(&nu) {
            grid.push(nu);
        }
    }
    Ok(grid)
}

/// Nearest-rank percentile: the element at 1-based index `ceil(q N)`.
///
/// `q N` within `1e-9` of an integer is treated as that integer.
pub fn nearest_rank_percentile(sorted: &[u64], q: f64) -> Result<u64> {
    if sorted.is_empty() {
        return Err(QcdError::EmptyInput);
    }
    check_probability("q", q)?;
    Ok(sorted[nearest_rank_index(sorted.len(), q) - 1])
}

fn nearest_rank_index(len: usize, q: f64) -> usize {
    let pos = q * len as f64;
    let rounded = pos.round();
    let rank = if (pos - rounded).abs() <= 1e-9 { rounded } else { pos.ceil() };
    (rank as usize).clamp(1, len)
}

/// Full description of a latency experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub detector: DetectorKind,
    pub delta_f: f64,
    pub delta_d: f64,
    pub horizon: usize,
    pub pre_window: usize,
    pub pre: GaussianModel,
    pub post: GaussianModel,
    pub grid: Vec<usize>,
    pub trials_per_point: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub allow_variance_mismatch: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        check_probability("delta_f", self.delta_f)?;
        check_probability("delta_d", self.delta_d)?;
        if self.trials_per_point < 1 {
            return Err(QcdError::InvalidParameter {
                name: "trials",
                reason: "at least one trial per change point".into(),
            });
        }
        if self.grid.is_empty() {
            return Err(QcdError::InvalidParameter {
                name: "grid",
                reason: "no change points".into(),
            });
        }
        for &nu in &self.grid {
            self.scenario(nu).validate()?;
        }
        self.scenario(self.grid[0])
            .check_detector_variance(self.detector.sigma2, self.allow_variance_mismatch)?;
        check_gsr_horizon(&self.detector, self.horizon)
    }

    pub fn scenario(&self, change_point: usize) -> ChangeScenario {
        ChangeScenario {
            horizon: self.horizon,
            change_point: Some(change_point),
            pre_window: self.pre_window,
            pre: self.pre,
            post: self.post,
        }
    }

    pub fn setup(&self) -> DetectorSetup {
        DetectorSetup {
            kind: self.detector,
            delta_f: self.delta_f,
        }
    }

    /// Theoretical latency guarantee matching the plan, where one exists.
    pub fn bound(&self) -> Option<u64> {
        let kind = self.detector.test.threshold_kind()?;
        let b = BoundInputs {
            horizon: self.horizon,
            delta_f: self.delta_f,
            delta_d: self.delta_d,
            sigma2: self.detector.sigma2,
            gap: (self.post.mean - self.pre.mean).abs(),
            pre_window: self.pre_window,
            kind,
        };
        match self.detector.test {
            TestKind::GlrPost | TestKind::GsrPost => latency_bound_known_pre(&b).ok(),
            TestKind::GlrBoth | TestKind::GsrBoth => latency_bound_both_unknown(&b).ok(),
            _ => None,
        }
    }
}

fn check_gsr_horizon(kind: &DetectorKind, horizon: usize) -> Result<()> {
    if kind.test.is_gsr() && kind.window == Window::Full && horizon > kind.gsr_cap {
        return Err(QcdError::GsrHorizonCap {
            cap: kind.gsr_cap,
            step: horizon,
        });
    }
    Ok(())
}

/// Aggregate over the trials at one change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerChangePoint {
    pub nu: usize,
    /// Nearest-rank `1 - delta_d` percentile of delays, censored trials
    /// counted as `T + 1 - nu`; `None` when every trial was a false alarm.
    pub percentile_delay: Option<u64>,
    pub n_trials: usize,
    pub n_delays: usize,
    pub n_false_alarms: usize,
    pub n_censored: usize,
    /// False when the percentile lands on a censored trial.
    pub resolved: bool,
    /// Trials whose delay (censored included) reaches the bound.
    pub n_late: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub plan: ExperimentPlan,
    pub per_nu: Vec<PerChangePoint>,
    /// Maximum percentile delay over the grid.
    pub empirical_latency: Option<u64>,
    pub all_resolved: bool,
    /// Fraction of all trials that fired before their change point.
    pub fa_probability: f64,
    pub bound: Option<u64>,
}

fn summarise(plan: &ExperimentPlan, nu: usize, records: &[TrialRecord], bound: Option<u64>) -> PerChangePoint {
    let censored_delay = (plan.horizon + 1 - nu) as u64;
    let mut delays = Vec::with_capacity(records.len());
    let (mut n_false_alarms, mut n_censored) = (0, 0);
    for r in records {
        match r.outcome {
            TrialOutcome::Delay(d) => delays.push(d as u64),
            TrialOutcome::FalseAlarm => n_false_alarms += 1,
            TrialOutcome::Censored => n_censored += 1,
        }
    }
    let n_delays = delays.len();
    delays.sort_unstable();
    delays.extend(std::iter::repeat(censored_delay).take(n_censored));
    let q = 1.0 - plan.delta_d;
    let (percentile_delay, resolved) = if delays.is_empty() {
        (None, false)
    } else {
        let idx = nearest_rank_index(delays.len(), q);
        (Some(delays[idx - 1]), idx <= n_delays)
    };
    let n_late = bound.map(|b| delays.iter().filter(|&&d| d >= b).count());
    PerChangePoint {
        nu,
        percentile_delay,
        n_trials: records.len(),
        n_delays,
        n_false_alarms,
        n_censored,
        resolved,
        n_late,
    }
}

/// Run the plan with its own detector.
pub fn estimate_latency(plan: &ExperimentPlan) -> Result<LatencyReport> {
    estimate_latency_with(plan, &plan.setup())
}

/// Run the plan's trials with an arbitrary stopping rule.
pub fn estimate_latency_with(plan: &ExperimentPlan, rule: &dyn StoppingRule) -> Result<LatencyReport> {
    plan.validate()?;
    let trials = plan.trials_per_point;
    let records = (0..plan.grid.len() * trials)
        .into_par_iter()
        .map(|i| {
            let (g, t) = (i / trials, i % trials);
            let seed = mix(plan.base_seed, g as u64, t as u64);
            run_trial(rule, &plan.scenario(plan.grid[g]), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = plan.bound();
    let per_nu: Vec<PerChangePoint> = plan
        .grid
        .iter()
        .zip(records.chunks(trials))
        .map(|(&nu, chunk)| summarise(plan, nu, chunk, bound))
        .collect();
    let empirical_latency = per_nu.iter().filter_map(|p| p.percentile_delay).max();
    let all_resolved = per_nu.iter().all(|p| p.resolved);
    let false_alarms: usize = per_nu.iter().map(|p| p.n_false_alarms).sum();
    Ok(LatencyReport {
        plan: plan.clone(),
        per_nu,
        empirical_latency,
        all_resolved,
        fa_probability: false_alarms as f64 / records.len() as f64,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmReport {
    pub fa_rate: f64,
    /// `3 sqrt(p (1 - p) / trials)`.
    pub ci_halfwidth: f64,
    pub n_trials: usize,
    pub n_alarms: usize,
    pub earliest_alarm: Option<usize>,
    pub latest_alarm: Option<usize>,
}

/// Run `trials` no-change streams of length `horizon` drawn from `pre`.
pub fn estimate_false_alarm(
    rule: &dyn StoppingRule,
    horizon: usize,
    trials: usize,
    base_seed: u64,
    pre: GaussianModel,
) -> Result<FalseAlarmReport> {
    if trials < 1 {
        return Err(QcdError::InvalidParameter {
            name: "trials",
            reason: "at least one trial".into(),
        });
    }
    let scenario = ChangeScenario::no_change(horizon, pre);
    scenario.validate()?;
    let fired: Vec<Option<usize>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(rule, &scenario, mix(base_seed, NO_CHANGE_STREAM, t as u64)).map(|r| r.fired_at))
        .collect::<Result<_>>()?;
    let alarms: Vec<usize> = fired.into_iter().flatten().collect();
    let p = alarms.len() as f64 / trials as f64;
    Ok(FalseAlarmReport {
        fa_rate: p,
        ci_halfwidth: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
        n_trials: trials,
        n_alarms: alarms.len(),
        earliest_alarm: alarms.iter().copied().min(),
        latest_alarm: alarms.iter().copied().max(),
    })
}

/// No-change false-alarm run for a detector, with the same variance and
/// horizon checks as a latency plan.
pub fn estimate_detector_false_alarm(
    setup: &DetectorSetup,
    horizon: usize,
    trials: usize,
    base_seed: u64,
    pre: GaussianModel,
    allow_variance_mismatch: bool,
) -> Result<FalseAlarmReport> {
    setup.kind.validate()?;
    check_probability("delta_f", setup.delta_f)?;
    ChangeScenario::no_change(horizon, pre).check_detector_variance(setup.kind.sigma2, allow_variance_mismatch)?;
    check_gsr_horizon(&setup.kind, horizon)?;
    estimate_false_alarm(setup, horizon, trials, base_seed, pre)
}
