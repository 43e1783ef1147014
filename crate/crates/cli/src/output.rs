//! Report emission. CSV uses ',' separators, a header row and LF line endings.

use std::io::Write;
use std::path::Path;

use qcd_core::detectors::StepOutcome;
use qcd_core::montecarlo::{FalseAlarmReport, LatencyReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub(crate) fn finish(writer: csv::Writer<Vec<u8>>) -> CliResult<Vec<u8>> {
    writer.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

pub(crate) fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Write to `path`, or to standard output when no path is given.
pub(crate) fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p.display().to_string(), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("stdout", e))
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn latency_csv(report: &LatencyReport) -> CliResult<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["nu", "percentile_delay", "n_trials", "n_false_alarms", "n_censored"])?;
    for p in &report.per_nu {
        w.write_record([
            p.nu.to_string(),
            opt(p.percentile_delay),
            p.n_trials.to_string(),
            p.n_false_alarms.to_string(),
            p.n_censored.to_string(),
        ])?;
    }
    let total = |f: fn(&qcd_core::montecarlo::PerChangePoint) -> usize| -> String {
        report.per_nu.iter().map(f).sum::<usize>().to_string()
    };
    w.write_record([
        "summary".to_string(),
        opt(report.empirical_latency),
        total(|p| p.n_trials),
        total(|p| p.n_false_alarms),
        total(|p| p.n_censored),
    ])?;
    finish(w)
}

pub(crate) fn false_alarm_csv(report: &FalseAlarmReport) -> CliResult<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["fa_rate", "ci_halfwidth", "n_trials", "n_alarms", "earliest_alarm", "latest_alarm"])?;
    w.write_record([
        report.fa_rate.to_string(),
        report.ci_halfwidth.to_string(),
        report.n_trials.to_string(),
        report.n_alarms.to_string(),
        opt(report.earliest_alarm),
        opt(report.latest_alarm),
    ])?;
    finish(w)
}

pub(crate) fn trace_csv(trace: &[StepOutcome]) -> CliResult<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["n", "statistic", "threshold", "alarm"])?;
    for s in trace {
        w.write_record([
            s.n.to_string(),
            s.statistic.to_string(),
            s.threshold.to_string(),
            s.alarm.to_string(),
        ])?;
    }
    finish(w)
}

/// Bound table: one header row and one value row; inapplicable cells are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub detector: String,
    pub horizon: usize,
    pub delta_f: f64,
    pub delta_d: f64,
    pub sigma2: f64,
    pub gap: f64,
    pub pre_window: Option<usize>,
    pub m_min: Option<u64>,
    pub m_cor1: Option<u64>,
    pub d: u64,
}

pub(crate) fn bounds_csv(row: &BoundsRow) -> CliResult<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["detector", "horizon", "delta_f", "delta_d", "sigma2", "gap", "pre_window", "m_min", "m_cor1", "d"])?;
    w.write_record([
        row.detector.clone(),
        row.horizon.to_string(),
        row.delta_f.to_string(),
        row.delta_d.to_string(),
        row.sigma2.to_string(),
        row.gap.to_string(),
        opt(row.pre_window),
        opt(row.m_min),
        opt(row.m_cor1),
        row.d.to_string(),
    ])?;
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub empirical_latency: Option<u64>,
    pub bound: Option<u64>,
    pub detector: String,
    #[serde(skip)]
    pub report: LatencyReport,
}

pub(crate) fn sweep_csv(rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(["axis_value", "empirical_latency", "bound", "detector"])?;
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            opt(r.empirical_latency),
            opt(r.bound),
            r.detector.clone(),
        ])?;
    }
    finish(w)
}
