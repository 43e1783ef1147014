//! Command-line flags and the optional JSON config file.
//!
//! Every flag may also appear in the config file under its long name; flags
//! given on the command line take precedence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcd_core::detectors::{DetectorKind, TestKind};
use qcd_core::model::GaussianModel;
use qcd_core::stats::Window;
use qcd_core::QcdError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qcd", version, about = "Sequential change detection for Gaussian streams")]
pub struct Cli {
    #[command(flatten)]
    pub options: Options,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run a detector over a file of observations, one per line.
    Detect { input: PathBuf },
    /// Generate one observation stream.
    Simulate,
    /// Estimate the empirical latency over a change-point grid.
    Latency,
    /// Estimate the false-alarm probability on change-free streams.
    FalseAlarm,
    /// Evaluate the closed-form latency and pre-window guarantees.
    Bounds,
    /// Latency and bound across a horizon or risk grid.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Horizon,
    Delta,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// cusum, tvt-cusum, sr, glr-post, gsr-post, glr-both, gsr-both (sweep accepts a comma list)
    #[arg(long, global = true)]
    pub detector: Option<String>,
    /// Pre-change mean (known to one-sided tests; scenario mean otherwise)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu0: Option<f64>,
    /// Post-change mean
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu1: Option<f64>,
    /// Change gap used when --mu1 is absent
    #[arg(long, global = true)]
    pub gap: Option<f64>,
    #[arg(long, global = true)]
    pub sigma2: Option<f64>,
    #[arg(long, global = true)]
    pub delta_f: Option<f64>,
    #[arg(long, global = true)]
    pub delta_d: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub pre_window: Option<usize>,
    /// Candidate window: "full" or a positive integer
    #[arg(long, global = true)]
    pub window: Option<Window>,
    /// Trials per change point
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated change points
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for Monte Carlo commands
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with default values for any of these flags
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Fixed threshold for cusum, log threshold for sr
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Exponent of the TVT-CuSum threshold
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Change point for simulate (omit for a change-free stream)
    #[arg(long, global = true)]
    pub change_point: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub axis: Option<Axis>,
    /// Comma-separated sweep values
    #[arg(long, global = true, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Write the per-step trace of detect as CSV to this path
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    /// Allow windowed GSR statistics
    #[arg(long, global = true)]
    #[serde(default)]
    pub experimental: bool,
    /// Include the k = n term in the two-sided GSR sum
    #[arg(long, global = true)]
    #[serde(default)]
    pub include_degenerate_split: bool,
    /// Accept scenario variances that differ from --sigma2
    #[arg(long, global = true)]
    #[serde(default)]
    pub allow_variance_mismatch: bool,
    /// Step limit of unwindowed GSR statistics
    #[arg(long, global = true)]
    pub gsr_cap: Option<usize>,
    /// Fixed delay of the "oracle" test detector
    #[arg(long, global = true, hide = true)]
    pub oracle_delay: Option<usize>,
}

macro_rules! prefer {
    ($a:ident, $b:ident; $($field:ident),*) => {
        Options {
            $($field: $a.$field.or($b.$field),)*
            experimental: $a.experimental || $b.experimental,
            include_degenerate_split: $a.include_degenerate_split || $b.include_degenerate_split,
            allow_variance_mismatch: $a.allow_variance_mismatch || $b.allow_variance_mismatch,
        }
    };
}

impl Options {
    /// Fill unset fields from `fallback`.
    pub fn or(self, fallback: Options) -> Options {
        let (a, b) = (self, fallback);
        prefer!(a, b; detector, mu0, mu1, gap, sigma2, delta_f, delta_d, horizon, pre_window, window,
            trials, seed, grid, output, format, threads, config, threshold, r, change_point, axis,
            values, trace, gsr_cap, oracle_delay)
    }

    pub fn load_config(path: &Path) -> CliResult<Options> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Merge the config file named by `--config`, if any.
    pub fn resolve(self) -> CliResult<Options> {
        match self.config.clone() {
            Some(path) => Ok(self.or(Options::load_config(&path)?)),
            None => Ok(self),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2.unwrap_or(1.0)
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f.unwrap_or(0.01)
    }

    pub fn delta_d(&self) -> f64 {
        self.delta_d.unwrap_or(0.01)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(2000)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn horizon(&self) -> CliResult<usize> {
        self.horizon
            .ok_or_else(|| CliError::Validation("missing --horizon".into()))
    }

    pub fn detector_name(&self) -> CliResult<&str> {
        self.detector
            .as_deref()
            .ok_or_else(|| CliError::Validation("missing --detector".into()))
    }

    /// Pre- and post-change models of simulated streams.
    ///
    /// The post-change mean is `--mu1`, or `--mu0 + --gap` (gap 1 by default).
    pub fn models(&self) -> CliResult<(GaussianModel, GaussianModel)> {
        if self.mu1.is_some() && self.gap.is_some() {
            return Err(CliError::Validation("give either --mu1 or --gap, not both".into()));
        }
        let mu0 = self.mu0.unwrap_or(0.0);
        let mu1 = self.mu1.unwrap_or(mu0 + self.gap.unwrap_or(1.0));
        let pre = GaussianModel::new(mu0, self.sigma2())?;
        let post = GaussianModel::new(mu1, self.sigma2())?;
        Ok((pre, post))
    }

    /// Change gap for the bound calculators.
    pub fn gap(&self) -> CliResult<f64> {
        let (pre, post) = self.models()?;
        Ok((post.mean - pre.mean).abs())
    }

    /// Build a detector by name. Missing means are taken from `defaults`.
    pub fn detector_kind(&self, name: &str, defaults: Option<(f64, f64)>) -> CliResult<DetectorKind> {
        let test = match name {
            "cusum" => TestKind::CusumFixed {
                threshold: self.required_threshold("cusum")?,
            },
            "tvt-cusum" => TestKind::TvtCusum {
                r: self.r.unwrap_or(2.0),
            },
            "sr" => TestKind::SrFixed {
                log_threshold: self.required_threshold("cusum")?,
            },
            "glr-post" => TestKind::GlrPost,
            "gsr-post" => TestKind::GsrPost,
            "glr-both" => TestKind::GlrBoth,
            "gsr-both" => TestKind::GsrBoth,
            other => return Err(CliError::Validation(format!("unknown detector '{other}'"))),
        };
        let mut kind = DetectorKind::new(test, self.sigma2());
        let (d0, d1) = defaults.map_or((None, None), |(a, b)| (Some(a), Some(b)));
        if !test.is_two_sided() {
            kind.mu0 = self.mu0.or(d0);
        }
        if matches!(
            test,
            TestKind::CusumFixed { .. } | TestKind::TvtCusum { .. } | TestKind::SrFixed { .. }
        ) {
            kind.mu1 = self.mu1.or(d1);
        }
        if let Some(w) = self.window {
            kind.window = w;
        }
        kind.experimental_windowed_gsr = self.experimental;
        kind.include_degenerate_split = self.include_degenerate_split;
        if let Some(cap) = self.gsr_cap {
            kind.gsr_cap = cap;
        }
        kind.validate()?;
        Ok(kind)
    }

    fn required_threshold(&self, name: &'static str) -> CliResult<f64> {
        self.threshold.ok_or_else(|| {
            QcdError::MissingParameter {
                kind: name,
                param: "threshold",
            }
            .into()
        })
    }
}
