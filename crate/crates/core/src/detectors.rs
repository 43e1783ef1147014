//! One-pass stopping rules behind a common step interface.
//!
//! A detector consumes one observation per step, reports its statistic and
//! threshold, and latches at the first step where the statistic reaches the
//! threshold. After firing it is frozen: later steps return the firing
//! outcome unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_variance, QcdError, Result};
use crate::stats::search::{PostChangeSearch, SplitSearch};
use crate::stats::{
    cusum_update, gsr_both_logstat_with, gsr_post_logstat, llr_unchecked, log_add_exp, PrefixState, Window,
};
use crate::thresholds::{Threshold, ThresholdKind};

/// Candidate-window size used by the simulated GLR tests.
pub const DEFAULT_WINDOW: usize = 700;
/// Largest step at which an unwindowed GSR statistic is evaluated.
pub const DEFAULT_GSR_CAP: usize = 5000;

/// Test statistic and threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "test")]
pub enum TestKind {
    /// CuSum against a constant threshold.
    CusumFixed { threshold: f64 },
    /// CuSum against `ln(zeta(r) n^r / delta_f)`.
    TvtCusum { r: f64 },
    /// Shiryaev-Roberts (log scale) against a constant threshold.
    SrFixed { log_threshold: f64 },
    GlrPost,
    GsrPost,
    GlrBoth,
    GsrBoth,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::CusumFixed { .. } => "cusum",
            TestKind::TvtCusum { .. } => "tvt-cusum",
            TestKind::SrFixed { .. } => "sr",
            TestKind::GlrPost => "glr-post",
            TestKind::GsrPost => "gsr-post",
            TestKind::GlrBoth => "glr-both",
            TestKind::GsrBoth => "gsr-both",
        }
    }

    pub fn is_two_sided(&self) -> bool {
        matches!(self, TestKind::GlrBoth | TestKind::GsrBoth)
    }

    pub fn is_gsr(&self) -> bool {
        matches!(self, TestKind::GsrPost | TestKind::GsrBoth)
    }

    fn needs_post_mean(&self) -> bool {
        matches!(
            self,
            TestKind::CusumFixed { .. } | TestKind::TvtCusum { .. } | TestKind::SrFixed { .. }
        )
    }

    fn needs_pre_mean(&self) -> bool {
        !self.is_two_sided()
    }

    /// Time-varying threshold family, if the test uses one.
    pub fn threshold_kind(&self) -> Option<ThresholdKind> {
        match *self {
            TestKind::CusumFixed { .. } | TestKind::SrFixed { .. } => None,
            TestKind::TvtCusum { r } => Some(ThresholdKind::TvtCusum { r }),
            TestKind::GlrPost => Some(ThresholdKind::GlrPost),
            TestKind::GsrPost => Some(ThresholdKind::GsrPost),
            TestKind::GlrBoth => Some(ThresholdKind::GlrBoth),
            TestKind::GsrBoth => Some(ThresholdKind::GsrBoth),
        }
    }
}

/// A test together with the parameters it is run with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorKind {
    pub test: TestKind,
    pub window: Window,
    /// Known pre-change mean.
    pub mu0: Option<f64>,
    /// Known post-change mean.
    pub mu1: Option<f64>,
    pub sigma2: f64,
    /// Allow a truncated-sum GSR statistic (no guarantees attached).
    #[serde(default)]
    pub experimental_windowed_gsr: bool,
    /// Add the unit `k = n` term to the two-sided GSR sum.
    #[serde(default)]
    pub include_degenerate_split: bool,
    #[serde(default = "default_gsr_cap")]
    pub gsr_cap: usize,
}

fn default_gsr_cap() -> usize {
    DEFAULT_GSR_CAP
}

impl DetectorKind {
    /// Default window: 700 for the GLR tests, unwindowed for GSR.
    pub fn new(test: TestKind, sigma2: f64) -> Self {
        let window = match test {
            TestKind::GlrPost | TestKind::GlrBoth => Window::Last(DEFAULT_WINDOW),
            _ => Window::Full,
        };
        Self {
            test,
            window,
            mu0: None,
            mu1: None,
            sigma2,
            experimental_windowed_gsr: false,
            include_degenerate_split: false,
            gsr_cap: DEFAULT_GSR_CAP,
        }
    }

    pub fn with_means(mut self, mu0: Option<f64>, mu1: Option<f64>) -> Self {
        self.mu0 = mu0;
        self.mu1 = mu1;
        self
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn name(&self) -> &'static str {
        self.test.name()
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.name();
        check_variance(self.sigma2)?;
        self.window.validate()?;
        let require = |value: Option<f64>, param: &'static str| match value {
            None => Err(QcdError::MissingParameter { kind, param }),
            Some(v) if !v.is_finite() => Err(QcdError::InvalidParameter {
                name: param,
                reason: format!("must be finite, got {v}"),
            }),
            Some(_) => Ok(()),
        };
        if self.test.needs_pre_mean() {
            require(self.mu0, "mu0")?;
        }
        if self.test.needs_post_mean() {
            require(self.mu1, "mu1")?;
            if self.mu0 == self.mu1 {
                return Err(QcdError::InvalidParameter {
                    name: "mu1",
                    reason: "must differ from mu0".into(),
                });
            }
        }
        match self.test {
            TestKind::CusumFixed { threshold } | TestKind::SrFixed { log_threshold: threshold } if threshold.is_nan() => {
                return Err(QcdError::InvalidParameter {
                    name: "threshold",
                    reason: "must not be NaN".into(),
                });
            }
            TestKind::TvtCusum { r } if !(r > 1.0 && r.is_finite()) => return Err(QcdError::ZetaDivergent(r)),
            _ => {}
        }
        if self.test.is_gsr() {
            if matches!(self.window, Window::Last(_)) && !self.experimental_windowed_gsr {
                return Err(QcdError::InvalidParameter {
                    name: "window",
                    reason: "windowed GSR statistics are experimental; enable them explicitly".into(),
                });
            }
            if self.window == Window::Full && self.gsr_cap == 0 {
                return Err(QcdError::InvalidParameter {
                    name: "gsr_cap",
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

/// Result of one detector step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub n: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub alarm: bool,
}

#[derive(Debug, Clone)]
enum Engine {
    Cusum { c: f64, mu0: f64, mu1: f64 },
    /// `log S_n`; `-inf` encodes `S_0 = 0`.
    Sr { log_s: f64, mu0: f64, mu1: f64 },
    Post { prefix: PrefixState, search: PostChangeSearch, mu0: f64 },
    Split { prefix: PrefixState, search: SplitSearch },
}

#[derive(Debug, Clone, Copy)]
enum Limit {
    Fixed(f64),
    Varying(Threshold),
}

impl Limit {
    fn at(&self, n: usize) -> f64 {
        match self {
            Limit::Fixed(b) => *b,
            Limit::Varying(t) => t.at(n),
        }
    }
}

/// A running detector.
#[derive(Debug, Clone)]
pub struct DetectorState {
    kind: DetectorKind,
    delta_f: f64,
    limit: Limit,
    engine: Engine,
    n: usize,
    fired: Option<StepOutcome>,
    poisoned: bool,
}

/// Build a fresh detector (`C_0 = 0`, `S_0 = 0`, empty prefix).
pub fn make_detector(kind: DetectorKind, delta_f: f64) -> Result<DetectorState> {
    DetectorState::new(kind, delta_f)
}

impl DetectorState {
    pub fn new(kind: DetectorKind, delta_f: f64) -> Result<Self> {
        kind.validate()?;
        check_probability("delta_f", delta_f)?;
        let limit = match (kind.test, kind.test.threshold_kind()) {
            (TestKind::CusumFixed { threshold }, _) => Limit::Fixed(threshold),
            (TestKind::SrFixed { log_threshold }, _) => Limit::Fixed(log_threshold),
            (_, Some(t)) => Limit::Varying(Threshold::new(t, delta_f)?),
            (_, None) => unreachable!("every varying test has a threshold family"),
        };
        let mu0 = kind.mu0.unwrap_or(0.0);
        let mu1 = kind.mu1.unwrap_or(0.0);
        let engine = match kind.test {
            TestKind::CusumFixed { .. } | TestKind::TvtCusum { .. } => Engine::Cusum { c: 0.0, mu0, mu1 },
            TestKind::SrFixed { .. } => Engine::Sr {
                log_s: f64::NEG_INFINITY,
                mu0,
                mu1,
            },
            TestKind::GlrPost | TestKind::GsrPost => Engine::Post {
                prefix: PrefixState::new(),
                search: PostChangeSearch::new(mu0),
                mu0,
            },
            TestKind::GlrBoth | TestKind::GsrBoth => Engine::Split {
                prefix: PrefixState::new(),
                search: SplitSearch::new(),
            },
        };
        Ok(Self {
            kind,
            delta_f,
            limit,
            engine,
            n: 0,
            fired: None,
            poisoned: false,
        })
    }

    pub fn kind(&self) -> &DetectorKind {
        &self.kind
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Observations consumed (frozen once fired).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fired_at(&self) -> Option<usize> {
        self.fired.map(|o| o.n)
    }

    /// Scalar recursion state: `C_n` for CuSum tests, `log S_n` for SR.
    pub fn scalar_statistic(&self) -> Option<f64> {
        match self.engine {
            Engine::Cusum { c, .. } => Some(c),
            Engine::Sr { log_s, .. } => Some(log_s),
            _ => None,
        }
    }

    pub fn prefix(&self) -> Option<&PrefixState> {
        match &self.engine {
            Engine::Post { prefix, .. } | Engine::Split { prefix, .. } => Some(prefix),
            _ => None,
        }
    }

    /// Feed one observation and report the full outcome.
    pub fn step(&mut self, x: f64) -> Result<StepOutcome> {
        if let Some(fired) = self.fired {
            return Ok(fired);
        }
        self.ingest(x)?;
        let statistic = self.statistic()?;
        let threshold = self.limit.at(self.n);
        let outcome = StepOutcome {
            n: self.n,
            statistic,
            threshold,
            alarm: self.can_fire() && statistic >= threshold,
        };
        if outcome.alarm {
            self.fired = Some(outcome);
        }
        Ok(outcome)
    }

    /// Feed one observation and report only whether the detector has fired.
    ///
    /// Decisions agree with [`step`](Self::step); GSR statistics are only
    /// evaluated when the GLR maximum does not already rule out a crossing.
    pub fn advance(&mut self, x: f64) -> Result<Option<usize>> {
        if let Some(fired) = self.fired {
            return Ok(Some(fired.n));
        }
        self.ingest(x)?;
        if !self.can_fire() {
            return Ok(None);
        }
        let n = self.n;
        let threshold = self.limit.at(n);
        let crossed = match self.engine {
            Engine::Cusum { .. } | Engine::Sr { .. } => true,
            // log W <= G + ln(number of terms)
            _ if self.kind.test.is_gsr() => self.glr_exceeds(threshold - (self.term_count() as f64).ln() - 1e-9),
            _ => self.glr_exceeds(threshold),
        };
        if !crossed {
            return Ok(None);
        }
        let statistic = self.statistic()?;
        if statistic >= threshold {
            self.fired = Some(StepOutcome {
                n,
                statistic,
                threshold,
                alarm: true,
            });
            return Ok(Some(n));
        }
        Ok(None)
    }

    fn can_fire(&self) -> bool {
        !(self.kind.test.is_two_sided() && self.n < 2)
    }

    fn ingest(&mut self, x: f64) -> Result<()> {
        if self.poisoned {
            return Err(QcdError::Poisoned);
        }
        let step = self.n + 1;
        if !x.is_finite() {
            self.poisoned = true;
            return Err(QcdError::NonFiniteObservation { step, value: x });
        }
        if self.kind.test.is_gsr() && self.kind.window == Window::Full && step > self.kind.gsr_cap {
            self.poisoned = true;
            return Err(QcdError::GsrHorizonCap {
                cap: self.kind.gsr_cap,
                step,
            });
        }
        let sigma2 = self.kind.sigma2;
        match &mut self.engine {
            Engine::Cusum { c, mu0, mu1 } => *c = cusum_update(*c, llr_unchecked(x, *mu0, *mu1, sigma2)),
            Engine::Sr { log_s, mu0, mu1 } => {
                // log((S + 1) * lr)
                *log_s = log_add_exp(*log_s, 0.0) + llr_unchecked(x, *mu0, *mu1, sigma2);
            }
            Engine::Post { prefix, search, .. } => {
                prefix.push(x);
                search.observe(prefix);
            }
            Engine::Split { prefix, search } => {
                prefix.push(x);
                search.observe(prefix);
            }
        }
        self.n = step;
        Ok(())
    }

    /// Whether the GLR maximum reaches `level`.
    fn glr_exceeds(&mut self, level: f64) -> bool {
        let sigma2 = self.kind.sigma2;
        let window = self.kind.window;
        match &mut self.engine {
            Engine::Post { prefix, search, .. } => search.exceeds(prefix, sigma2, window, level),
            Engine::Split { prefix, search } => search.exceeds(prefix, sigma2, window, level),
            _ => unreachable!("scalar detectors have no GLR maximum"),
        }
    }

    /// Number of terms in the GSR sum at the current step.
    fn term_count(&self) -> usize {
        let n = self.n;
        match self.engine {
            Engine::Post { .. } => {
                let (lo, hi) = self.kind.window.post_range(n);
                hi - lo + 1
            }
            Engine::Split { .. } => {
                self.kind.window.split_range(n).map_or(0, |(lo, hi)| hi - lo + 1)
                    + usize::from(self.kind.include_degenerate_split)
            }
            _ => unreachable!("scalar detectors have no GSR sum"),
        }
    }

    fn statistic(&mut self) -> Result<f64> {
        let sigma2 = self.kind.sigma2;
        let window = self.kind.window;
        let gsr = self.kind.test.is_gsr();
        Ok(match &mut self.engine {
            Engine::Cusum { c, .. } => *c,
            Engine::Sr { log_s, .. } => *log_s,
            Engine::Post { prefix, search, mu0 } => {
                if gsr {
                    gsr_post_logstat(prefix, *mu0, sigma2, window)?
                } else {
                    search.sup(prefix, sigma2, window)
                }
            }
            Engine::Split { prefix, search } => {
                if prefix.len() < 2 {
                    0.0
                } else if gsr {
                    gsr_both_logstat_with(prefix, sigma2, window, self.kind.include_degenerate_split)?
                } else {
                    search.sup(prefix, sigma2, window)
                }
            }
        })
    }
}

/// Outcome of running a detector over a finite series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub fired_at: Option<usize>,
    /// Outcome at the firing step.
    pub alarm: Option<StepOutcome>,
    /// Per-step outcomes up to and including the firing step (when requested).
    pub trace: Vec<StepOutcome>,
}

/// Run a detector over `series`, stopping at the first alarm.
pub fn run_offline(kind: DetectorKind, delta_f: f64, series: &[f64], trace: bool) -> Result<StoppingReport> {
    let mut det = make_detector(kind, delta_f)?;
    let mut steps = Vec::new();
    for &x in series {
        if trace {
            let outcome = det.step(x)?;
            steps.push(outcome);
            if outcome.alarm {
                break;
            }
        } else if det.advance(x)?.is_some() {
            break;
        }
    }
    Ok(StoppingReport {
        fired_at: det.fired_at(),
        alarm: det.fired,
        trace: steps,
    })
}
