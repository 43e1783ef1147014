use std::path::Path;

use qcd_core::bounds::{
    latency_bound_both_unknown, latency_bound_known_pre, min_prewindow, prewindow_cor1, BoundInputs,
};
use qcd_core::detectors::{run_offline, DetectorKind, TestKind};
use qcd_core::model::ChangeScenario;
use qcd_core::montecarlo::{
    changepoint_grid, estimate_detector_false_alarm, estimate_latency, estimate_latency_with, generate_series,
    DetectorSetup, ExperimentPlan, FalseAlarmReport, LatencyReport, OracleDelay,
};
use qcd_core::thresholds::ThresholdKind;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::options::{Axis, Format, Options};
use crate::output::{self, BoundsRow, SweepRow};

/// Pre-window margin used by sweeps of the two-sided tests: `m = T - 1000`.
pub const SWEEP_POST_SPAN: usize = 1000;

/// Run `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

pub fn read_observations(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| CliError::Validation(format!("{}: line {}: not a number: {line:?}", path.display(), i + 1)))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Validation(format!("{}: no observations", path.display())));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectSummary {
    pub detector: String,
    pub fired_at: Option<usize>,
    pub observations: usize,
    pub final_statistic: f64,
    pub threshold: f64,
}

pub fn detect(o: &Options, input: &Path) -> CliResult<DetectSummary> {
    let kind = o.detector_kind(o.detector_name()?, None)?;
    let xs = read_observations(input)?;
    let report = run_offline(kind, o.delta_f(), &xs, true)?;
    let last = *report.trace.last().expect("nonempty series yields a step");
    if let Some(path) = &o.trace {
        output::emit(Some(path), &output::trace_csv(&report.trace)?)?;
    }
    Ok(DetectSummary {
        detector: kind.name().to_string(),
        fired_at: report.fired_at,
        observations: xs.len(),
        final_statistic: last.statistic,
        threshold: last.threshold,
    })
}

fn detect_text(s: &DetectSummary) -> Vec<u8> {
    let result = match s.fired_at {
        Some(n) => format!("alarm at n={n}"),
        None => "no alarm".to_string(),
    };
    format!(
        "detector: {}\nresult: {result}\nobservations: {}\nfinal_statistic: {}\nthreshold: {}\n",
        s.detector, s.observations, s.final_statistic, s.threshold
    )
    .into_bytes()
}

pub fn simulate(o: &Options) -> CliResult<Vec<f64>> {
    let (pre, post) = o.models()?;
    let scenario = ChangeScenario {
        horizon: o.horizon()?,
        change_point: o.change_point,
        pre_window: o.pre_window.unwrap_or(0),
        pre,
        post,
    };
    Ok(generate_series(&scenario, o.seed())?)
}

/// Latency plan for one detector, plus the oracle hook when requested.
pub fn latency_plan(
    o: &Options,
    name: &str,
    horizon: usize,
    delta: (f64, f64),
    pre_window: usize,
) -> CliResult<(ExperimentPlan, Option<OracleDelay>)> {
    let (pre, post) = o.models()?;
    let (detector, oracle) = if name == "oracle" {
        let delay = o
            .oracle_delay
            .ok_or_else(|| CliError::Validation("missing --oracle-delay".into()))?;
        let kind = DetectorKind::new(TestKind::GlrPost, o.sigma2()).with_means(Some(pre.mean), None);
        (kind, Some(OracleDelay(delay)))
    } else {
        (o.detector_kind(name, Some((pre.mean, post.mean)))?, None)
    };
    let grid = match &o.grid {
        Some(g) => g.clone(),
        None => changepoint_grid(horizon, pre_window)?,
    };
    let plan = ExperimentPlan {
        detector,
        delta_f: delta.0,
        delta_d: delta.1,
        horizon,
        pre_window,
        pre,
        post,
        grid,
        trials_per_point: o.trials(),
        base_seed: o.seed(),
        allow_variance_mismatch: o.allow_variance_mismatch,
    };
    plan.validate()?;
    Ok((plan, oracle))
}

fn run_plan(o: &Options, plan: &ExperimentPlan, oracle: Option<OracleDelay>) -> CliResult<LatencyReport> {
    let report = with_threads(o.threads, || match oracle {
        Some(rule) => estimate_latency_with(plan, &rule),
        None => estimate_latency(plan),
    })??;
    Ok(report)
}

pub fn latency(o: &Options) -> CliResult<LatencyReport> {
    let (plan, oracle) = latency_plan(
        o,
        o.detector_name()?,
        o.horizon()?,
        (o.delta_f(), o.delta_d()),
        o.pre_window.unwrap_or(0),
    )?;
    run_plan(o, &plan, oracle)
}

pub fn false_alarm(o: &Options) -> CliResult<FalseAlarmReport> {
    let (pre, post) = o.models()?;
    let kind = o.detector_kind(o.detector_name()?, Some((pre.mean, post.mean)))?;
    let setup = DetectorSetup {
        kind,
        delta_f: o.delta_f(),
    };
    let (horizon, trials, seed) = (o.horizon()?, o.trials(), o.seed());
    with_threads(o.threads, || {
        estimate_detector_false_alarm(&setup, horizon, trials, seed, pre, o.allow_variance_mismatch)
    })?
    .map_err(Into::into)
}

fn bound_kind(name: &str) -> CliResult<ThresholdKind> {
    match name {
        "glr-post" => Ok(ThresholdKind::GlrPost),
        "gsr-post" => Ok(ThresholdKind::GsrPost),
        "glr-both" => Ok(ThresholdKind::GlrBoth),
        "gsr-both" => Ok(ThresholdKind::GsrBoth),
        other => Err(CliError::Validation(format!(
            "no latency bound for '{other}'; use glr-post, gsr-post, glr-both or gsr-both"
        ))),
    }
}

pub fn bounds(o: &Options) -> CliResult<BoundsRow> {
    let name = o.detector_name()?;
    let kind = bound_kind(name)?;
    let mut b = BoundInputs {
        horizon: o.horizon()?,
        delta_f: o.delta_f(),
        delta_d: o.delta_d(),
        sigma2: o.sigma2(),
        gap: o.gap()?,
        pre_window: 0,
        kind,
    };
    let mut row = BoundsRow {
        detector: name.to_string(),
        horizon: b.horizon,
        delta_f: b.delta_f,
        delta_d: b.delta_d,
        sigma2: b.sigma2,
        gap: b.gap,
        pre_window: None,
        m_min: None,
        m_cor1: None,
        d: 0,
    };
    if matches!(kind, ThresholdKind::GlrPost | ThresholdKind::GsrPost) {
        row.d = latency_bound_known_pre(&b)?;
        return Ok(row);
    }
    let m_cor1 = prewindow_cor1(&b)?;
    row.m_min = Some(min_prewindow(&b)?);
    row.m_cor1 = Some(m_cor1);
    b.pre_window = o.pre_window.unwrap_or(m_cor1 as usize);
    row.pre_window = Some(b.pre_window);
    row.d = latency_bound_both_unknown(&b)?;
    Ok(row)
}

fn is_two_sided(name: &str) -> bool {
    matches!(name, "glr-both" | "gsr-both")
}

pub fn sweep(o: &Options) -> CliResult<Vec<SweepRow>> {
    let axis = o
        .axis
        .ok_or_else(|| CliError::Validation("missing --axis (horizon or delta)".into()))?;
    let values = o.values.clone().unwrap_or_default();
    if values.is_empty() {
        return Err(CliError::Validation("missing --values".into()));
    }
    let names: Vec<String> = o
        .detector_name()?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::Validation("empty --detector list".into()));
    }

    let mut plans = Vec::new();
    for name in &names {
        for &v in &values {
            let (horizon, delta) = match axis {
                Axis::Horizon => {
                    if !(v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64) {
                        return Err(CliError::Validation(format!("horizon must be a positive integer, got {v}")));
                    }
                    (v as usize, (o.delta_f(), o.delta_d()))
                }
                Axis::Delta => (o.horizon()?, (v, v)),
            };
            let pre_window = match o.pre_window {
                Some(m) => m,
                None if is_two_sided(name) => horizon.checked_sub(SWEEP_POST_SPAN).filter(|&m| m > 0).ok_or_else(|| {
                    CliError::Validation(format!(
                        "horizon {horizon} leaves no pre-window for {name}; pass --pre-window"
                    ))
                })?,
                None => 0,
            };
            let (plan, oracle) = latency_plan(o, name, horizon, delta, pre_window)?;
            plans.push((v, name.clone(), plan, oracle));
        }
    }
    let mut rows = Vec::with_capacity(plans.len());
    for (axis_value, detector, plan, oracle) in plans {
        let report = run_plan(o, &plan, oracle)?;
        rows.push(SweepRow {
            axis_value,
            empirical_latency: report.empirical_latency,
            bound: report.bound,
            detector,
            report,
        });
    }
    Ok(rows)
}

/// Execute a command and return the bytes to emit.
pub fn execute(command: &crate::options::Command, o: &Options) -> CliResult<Vec<u8>> {
    use crate::options::Command;
    let json = o.format() == Format::Json;
    match command {
        Command::Detect { input } => {
            let s = detect(o, input)?;
            if json {
                output::json_bytes(&s)
            } else {
                Ok(detect_text(&s))
            }
        }
        Command::Simulate => {
            let xs = simulate(o)?;
            if json {
                output::json_bytes(&xs)
            } else {
                Ok(xs.iter().map(|x| format!("{x}\n")).collect::<String>().into_bytes())
            }
        }
        Command::Latency => {
            let r = latency(o)?;
            if json {
                output::json_bytes(&r)
            } else {
                output::latency_csv(&r)
            }
        }
        Command::FalseAlarm => {
            let r = false_alarm(o)?;
            if json {
                output::json_bytes(&r)
            } else {
                output::false_alarm_csv(&r)
            }
        }
        Command::Bounds => {
            let r = bounds(o)?;
            if json {
                output::json_bytes(&r)
            } else {
                output::bounds_csv(&r)
            }
        }
        Command::Sweep => {
            let rows = sweep(o)?;
            if json {
                output::json_bytes(&rows)
            } else {
                output::sweep_csv(&rows)
            }
        }
    }
}

pub fn read_latency_report(path: &Path) -> CliResult<LatencyReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
