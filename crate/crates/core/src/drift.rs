//! CUSUM-type change detection on beta-distributed confidence scores.
//!
//! Every observation carries the current model's confidence in its own
//! prediction. Confidences are kept in a bounded sliding window. A scan
//! splits the window at every `k` in `[Δ, N-Δ]`; when the recent part's mean
//! confidence has dropped by at least a factor `(1-α)`, both parts are fitted
//! with beta distributions (method of moments) and the log-likelihood ratio
//! of the recent samples under the two fits is accumulated. The largest ratio
//! over all splits is compared against `-ln α`.
//!
//! Only drops in confidence are looked for: a model that grows more confident
//! has no reason to be replaced.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_beta;

/// Confidences are clamped into `[CONFIDENCE_EPS, 1 - CONFIDENCE_EPS]`; the
/// beta density is undefined at the end points.
pub const CONFIDENCE_EPS: f64 = 1e-6;

const VARIANCE_FLOOR: f64 = 1e-9;

pub fn clamp_confidence(c: f64) -> f64 {
    c.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS)
}

/// Shape parameters of a beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("beta parameters must be positive, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    /// Method-of-moments fit from a mean and an unbiased variance.
    fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        let degenerate = Error::DegenerateBeta { mean, variance };
        if !(variance >= VARIANCE_FLOOR) {
            return Err(degenerate);
        }
        let t = mean * (1.0 - mean) / variance - 1.0;
        if !(t > 0.0) || !t.is_finite() {
            return Err(degenerate);
        }
        Ok(Self { a: mean * t, b: (1.0 - mean) * t })
    }
}

/// Method-of-moments estimate with the unbiased sample variance.
pub fn estimate_beta(confidences: &[f64]) -> Result<BetaParams> {
    if confidences.len() < 2 {
        return Err(Error::Empty("need at least two confidences"));
    }
    let n = confidences.len() as f64;
    let mean = confidences.iter().sum::<f64>() / n;
    let variance = confidences.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
    BetaParams::from_moments(mean, variance)
}

/// `ln f(x | a, b)` for `x` in `(0, 1)`.
pub fn beta_log_pdf(x: f64, params: BetaParams) -> f64 {
    (params.a - 1.0) * x.ln() + (params.b - 1.0) * (1.0 - x).ln() - ln_beta(params.a, params.b)
}

/// Detection threshold `-ln α`.
pub fn threshold(alpha: f64) -> f64 {
    -alpha.ln()
}

/// Best split found by a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    /// Largest log-likelihood ratio (0 when nothing qualified).
    pub score: f64,
    /// Number of samples before the split, which is also the index of the
    /// first sample after it.
    pub change_point: Option<usize>,
}

/// Scans every split `k` in `[Δ, N-Δ]` of `confidences` (oldest first).
///
/// Runs in `O(N)` using prefix sums of `ς`, `ς²`, `ln ς` and `ln(1-ς)`; the
/// log-likelihood ratio of the recent part only needs those sums.
pub fn cusum_scan(confidences: &[f64], delta: usize, alpha: f64) -> ScanResult {
    let n = confidences.len();
    let mut best = ScanResult { score: 0.0, change_point: None };
    if delta == 0 || n < 2 * delta {
        return best;
    }
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    let mut sum_ln = vec![0.0; n + 1];
    let mut sum_ln1m = vec![0.0; n + 1];
    for (i, &c) in confidences.iter().enumerate() {
        sum[i + 1] = sum[i] + c;
        sum_sq[i + 1] = sum_sq[i] + c * c;
        sum_ln[i + 1] = sum_ln[i] + c.ln();
        sum_ln1m[i + 1] = sum_ln1m[i] + (1.0 - c).ln();
    }
    let moments = |from: usize, to: usize| {
        let m = (to - from) as f64;
        let s = sum[to] - sum[from];
        let mean = s / m;
        let var = (sum_sq[to] - sum_sq[from] - s * mean) / (m - 1.0);
        (mean, var)
    };
    for k in delta..=n - delta {
        let (mean_before, var_before) = moments(0, k);
        let (mean_after, var_after) = moments(k, n);
        if mean_after > (1.0 - alpha) * mean_before {
            continue;
        }
        let (Ok(before), Ok(after)) =
            (BetaParams::from_moments(mean_before, var_before), BetaParams::from_moments(mean_after, var_after))
        else {
            continue;
        };
        let m = (n - k) as f64;
        let ln_x = sum_ln[n] - sum_ln[k];
        let ln_1mx = sum_ln1m[n] - sum_ln1m[k];
        let log_lik = |p: BetaParams| (p.a - 1.0) * ln_x + (p.b - 1.0) * ln_1mx - m * ln_beta(p.a, p.b);
        let score = log_lik(after) - log_lik(before);
        if score > best.score {
            best = ScanResult { score, change_point: Some(k) };
        }
    }
    best
}

/// Outcome of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftDecision {
    pub fired: bool,
    pub change_point: Option<usize>,
    pub score: Option<f64>,
    /// Whether the scan actually ran (it is skipped by the random gate).
    pub scanned: bool,
}

/// Bounded FIFO of `(item, confidence)` pairs.
#[derive(Debug, Clone)]
pub struct DriftWindow<T> {
    entries: VecDeque<(T, f64)>,
    capacity: usize,
}

impl<T> DriftWindow<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    /// Appends an entry, evicting and returning the oldest one at capacity.
    pub fn push(&mut self, item: T, confidence: f64) -> Option<T> {
        let evicted = if self.entries.len() == self.capacity { self.entries.pop_front() } else { None };
        self.entries.push_back((item, confidence));
        evicted.map(|(item, _)| item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &(T, f64)> {
        self.entries.iter()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, c)| *c).collect()
    }

    /// Recomputes every stored confidence.
    pub fn rescore(&mut self, mut score: impl FnMut(&T) -> f64) {
        for (item, c) in self.entries.iter_mut() {
            *c = clamp_confidence(score(item));
        }
    }
}

/// Detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub delta: usize,
    pub alpha: f64,
    /// Run each scan only with probability `e^{-2ς}`; off means every
    /// observation is scanned.
    pub gating: bool,
}

impl DetectorConfig {
    pub fn new(delta: usize, alpha: f64) -> Self {
        Self { delta, alpha, gating: true }
    }

    /// `N_max = 20Δ`.
    pub fn window_capacity(&self) -> usize {
        20 * self.delta
    }

    pub fn threshold(&self) -> f64 {
        threshold(self.alpha)
    }
}

/// Sliding window plus the detection rule.
#[derive(Debug, Clone)]
pub struct DriftDetector<T> {
    config: DetectorConfig,
    window: DriftWindow<T>,
}

/// Result of [`DriftDetector::observe`].
#[derive(Debug)]
pub struct Observation<T> {
    pub decision: DriftDecision,
    pub evicted: Option<T>,
}

impl<T> DriftDetector<T> {
    pub fn new(config: DetectorConfig) -> Self {
        Self { window: DriftWindow::new(config.window_capacity()), config }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn window(&self) -> &DriftWindow<T> {
        &self.window
    }

    pub fn window_mut(&mut self) -> &mut DriftWindow<T> {
        &mut self.window
    }

    /// Stores `(item, confidence)` and, when `scan_enabled` and the random
    /// gate allows it, scans for a drop in confidence.
    ///
    /// The window is left intact on a fire: the caller retrains from it and
    /// then calls [`DriftWindow::clear`].
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        item: T,
        confidence: f64,
        rng: &mut R,
        scan_enabled: bool,
    ) -> Observation<T> {
        let confidence = clamp_confidence(confidence);
        let evicted = self.window.push(item, confidence);
        let mut decision = DriftDecision::default();
        if scan_enabled && self.window.len() >= 2 * self.config.delta {
            // The draw is consumed even when gating is off so that toggling
            // it does not shift the rest of the random stream.
            let r: f64 = rng.random();
            if !self.config.gating || (-2.0 * confidence).exp() >= r {
                decision.scanned = true;
                let scan = cusum_scan(&self.window.confidences(), self.config.delta, self.config.alpha);
                if scan.score > self.config.threshold() {
                    decision.fired = true;
                    decision.change_point = scan.change_point;
                    decision.score = Some(scan.score);
                }
            }
        }
        Observation { decision, evicted }
    }
}
