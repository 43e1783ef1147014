//! Exact branch-and-bound maximisation of the GLR terms.
//!
//! Candidate indices are grouped into fixed blocks whose summary (min/max of
//! a static per-index quantity) yields an upper bound on every term in the
//! block. Blocks whose bound cannot beat the running best are skipped; all
//! other terms are evaluated with the same expressions as the batch
//! statistics, so the maximum is bit-identical to the unpruned scan.
//!
//! Bounds are inflated by a small relative and absolute slack that dominates
//! floating-point disagreement between the bound algebra and the evaluated
//! terms.

use super::{post_term, split_term, PrefixState, Window};

const BLOCK: usize = 32;
const REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
struct BlockSummary {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    len: usize,
}

impl BlockSummary {
    fn push(&mut self, v: f64) {
        if self.len % BLOCK == 0 {
            self.mins.push(v);
            self.maxs.push(v);
        } else {
            let b = self.mins.len() - 1;
            self.mins[b] = self.mins[b].min(v);
            self.maxs[b] = self.maxs[b].max(v);
        }
        self.len += 1;
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lo: usize,
    hi: usize,
    bound: f64,
}

/// Best-first evaluation of the surviving candidates.
fn resolve<F: Fn(usize) -> f64>(candidates: &[Candidate], term: F) -> f64 {
    let Some(first) = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.bound.total_cmp(&b.1.bound))
        .map(|(i, _)| i)
    else {
        return f64::NEG_INFINITY;
    };
    let mut best = f64::NEG_INFINITY;
    let c = candidates[first];
    for k in c.lo..=c.hi {
        best = best.max(term(k));
    }
    for (i, c) in candidates.iter().enumerate() {
        if i == first || c.bound <= best {
            continue;
        }
        for k in c.lo..=c.hi {
            best = best.max(term(k));
        }
    }
    best
}

/// Whether any candidate term reaches `level`; terms are only evaluated in
/// blocks whose bound reaches it.
fn any_at_least<F: Fn(usize) -> f64>(candidates: &[Candidate], level: f64, term: F) -> bool {
    candidates
        .iter()
        .filter(|c| c.bound >= level)
        .any(|c| (c.lo..=c.hi).any(|k| term(k) >= level))
}

/// Maximiser for the known-pre-change-mean GLR statistic.
///
/// Indexes `D_j = S_j - j * mu0` for `j = k - 1`; the term for change index
/// `k` equals `(D_n - D_{k-1})^2 / (2 sigma2 (n - k + 1))`.
#[derive(Debug, Clone)]
pub(crate) struct PostChangeSearch {
    mu0: f64,
    offsets: BlockSummary,
    max_abs_sum: f64,
    scratch: Vec<Candidate>,
}

impl PostChangeSearch {
    pub(crate) fn new(mu0: f64) -> Self {
        let mut offsets = BlockSummary::default();
        offsets.push(0.0);
        Self {
            mu0,
            offsets,
            max_abs_sum: 0.0,
            scratch: Vec::new(),
        }
    }

    /// Register the newest prefix sum; call once after every `push`.
    pub(crate) fn observe(&mut self, prefix: &PrefixState) {
        let n = prefix.len();
        debug_assert_eq!(self.offsets.len, n);
        let s = prefix.cumsum()[n];
        self.max_abs_sum = self.max_abs_sum.max(s.abs());
        self.offsets.push(s - n as f64 * self.mu0);
    }

    pub(crate) fn sup(&mut self, prefix: &PrefixState, sigma2: f64, window: Window) -> f64 {
        self.fill(prefix, sigma2, window);
        let (mu0, n) = (self.mu0, prefix.len());
        resolve(&self.scratch, |k| post_term(prefix, k, n, mu0, sigma2))
    }

    /// `sup(..) >= level`, decided without evaluating the full maximum.
    pub(crate) fn exceeds(&mut self, prefix: &PrefixState, sigma2: f64, window: Window, level: f64) -> bool {
        self.fill(prefix, sigma2, window);
        let (mu0, n) = (self.mu0, prefix.len());
        any_at_least(&self.scratch, level, |k| post_term(prefix, k, n, mu0, sigma2))
    }

    fn fill(&mut self, prefix: &PrefixState, sigma2: f64, window: Window) {
        let n = prefix.len();
        debug_assert!(n >= 1 && self.offsets.len == n + 1);
        let (k_lo, k_hi) = window.post_range(n);
        let (j_lo, j_hi) = (k_lo - 1, k_hi - 1);
        let d_n = prefix.cumsum()[n] - n as f64 * self.mu0;
        let eps = REL_SLACK * (self.max_abs_sum + n as f64 * self.mu0.abs() + 1.0);

        self.scratch.clear();
        for b in j_lo / BLOCK..=j_hi / BLOCK {
            let lo = (b * BLOCK).max(j_lo);
            let hi = ((b + 1) * BLOCK - 1).min(j_hi);
            let spread = (d_n - self.offsets.mins[b])
                .abs()
                .max((d_n - self.offsets.maxs[b]).abs())
                + eps;
            // shortest segment in the block is k = hi + 1
            let len = (n - hi) as f64;
            let bound = spread * spread / (2.0 * sigma2 * len) * (1.0 + REL_SLACK);
            self.scratch.push(Candidate {
                lo: lo + 1,
                hi: hi + 1,
                bound,
            });
        }
    }
}

/// Maximiser for the GLR statistic with both means unknown.
///
/// The split term for `k` equals `n E_k^2 / (2 sigma2 k (n - k))` with
/// `E_k = S_k - k S_n / n`. Each block stores `F_k = S_k - k c_b` for a
/// reference slope `c_b` fixed when the block opens, so that
/// `E_k = F_k - k (S_n / n - c_b)` can be bounded per block.
#[derive(Debug, Clone, Default)]
pub(crate) struct SplitSearch {
    detrended: BlockSummary,
    slopes: Vec<f64>,
    max_abs_sum: f64,
    scratch: Vec<Candidate>,
}

impl SplitSearch {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn observe(&mut self, prefix: &PrefixState) {
        let k = prefix.len();
        debug_assert_eq!(self.detrended.len + 1, k);
        let s = prefix.cumsum()[k];
        self.max_abs_sum = self.max_abs_sum.max(s.abs());
        if self.detrended.len % BLOCK == 0 {
            self.slopes.push(s / k as f64);
        }
        let slope = *self.slopes.last().expect("slope for open block");
        self.detrended.push(s - k as f64 * slope);
    }

    /// Returns 0 when no split is admissible (n < 2).
    pub(crate) fn sup(&mut self, prefix: &PrefixState, sigma2: f64, window: Window) -> f64 {
        if !self.fill(prefix, sigma2, window) {
            return 0.0;
        }
        let n = prefix.len();
        resolve(&self.scratch, |k| split_term(prefix, k, n, sigma2))
    }

    /// `sup(..) >= level`, decided without evaluating the full maximum.
    pub(crate) fn exceeds(&mut self, prefix: &PrefixState, sigma2: f64, window: Window, level: f64) -> bool {
        if !self.fill(prefix, sigma2, window) {
            return 0.0 >= level;
        }
        let n = prefix.len();
        any_at_least(&self.scratch, level, |k| split_term(prefix, k, n, sigma2))
    }

    /// False when no split is admissible.
    fn fill(&mut self, prefix: &PrefixState, sigma2: f64, window: Window) -> bool {
        let n = prefix.len();
        debug_assert_eq!(self.detrended.len, n);
        let Some((k_lo, k_hi)) = window.split_range(n) else {
            return false;
        };
        let nf = n as f64;
        let overall = prefix.cumsum()[n] / nf;

        self.scratch.clear();
        for b in (k_lo - 1) / BLOCK..=(k_hi - 1) / BLOCK {
            // block b holds k in [b*BLOCK + 1, (b+1)*BLOCK]
            let first = b * BLOCK + 1;
            let last = ((b + 1) * BLOCK).min(self.detrended.len);
            let lo = first.max(k_lo);
            let hi = last.min(k_hi);
            let slope = self.slopes[b];
            let drift = overall - slope;
            let (d_first, d_last) = (first as f64 * drift, last as f64 * drift);
            let lower = self.detrended.mins[b] - d_first.max(d_last);
            let upper = self.detrended.maxs[b] - d_first.min(d_last);
            let eps = REL_SLACK * (self.max_abs_sum + nf * (overall.abs() + slope.abs()) + 1.0);
            let spread = lower.abs().max(upper.abs()) + eps;
            let den = ((lo * (n - lo)) as f64).min((hi * (n - hi)) as f64);
            let bound = nf * spread * spread / (2.0 * sigma2 * den) * (1.0 + REL_SLACK);
            self.scratch.push(Candidate { lo, hi, bound });
        }
        true
    }
}
