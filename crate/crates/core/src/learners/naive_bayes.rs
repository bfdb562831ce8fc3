use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::types::Posterior;

pub(crate) const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes: per-class priors and per-feature normal likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub log_priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

pub(super) fn fit(classes: usize, dim: usize, data: &[Sample<'_>]) -> NaiveBayesParams {
    let mut counts = vec![0usize; classes];
    let mut sums = vec![vec![0.0; dim]; classes];
    for s in data {
        counts[s.label.0] += 1;
        for (acc, v) in sums[s.label.0].iter_mut().zip(s.features) {
            *acc += v;
        }
    }
    let n = data.len() as f64;
    let pooled_mean: Vec<f64> = (0..dim).map(|j| sums.iter().map(|c| c[j]).sum::<f64>() / n).collect();

    let mut means = vec![vec![0.0; dim]; classes];
    for c in 0..classes {
        for j in 0..dim {
            means[c][j] = if counts[c] > 0 { sums[c][j] / counts[c] as f64 } else { pooled_mean[j] };
        }
    }
    // Two-pass variance around the class means.
    let mut sq = vec![vec![0.0; dim]; classes];
    let mut pooled_sq = vec![0.0; dim];
    for s in data {
        let c = s.label.0;
        for j in 0..dim {
            let d = s.features[j] - means[c][j];
            sq[c][j] += d * d;
            let dp = s.features[j] - pooled_mean[j];
            pooled_sq[j] += dp * dp;
        }
    }
    let variances = (0..classes)
        .map(|c| {
            (0..dim)
                .map(|j| {
                    let v = if counts[c] > 0 { sq[c][j] / counts[c] as f64 } else { pooled_sq[j] / n };
                    v.max(VARIANCE_FLOOR)
                })
                .collect()
        })
        .collect();
    // Laplace-smoothed priors keep absent classes representable.
    let log_priors = counts.iter().map(|&k| ((k as f64 + 1.0) / (n + classes as f64)).ln()).collect();
    NaiveBayesParams { log_priors, means, variances }
}

impl NaiveBayesParams {
    pub(super) fn posterior(&self, x: &[f64]) -> Posterior {
        let log_joint: Vec<f64> = self
            .log_priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(lp, (mu, var))| {
                lp + x
                    .iter()
                    .zip(mu.iter().zip(var))
                    .map(|(xj, (m, v))| -0.5 * (2.0 * PI * v).ln() - (xj - m) * (xj - m) / (2.0 * v))
                    .sum::<f64>()
            })
            .collect();
        Posterior::from_log_weights(&log_joint)
    }
}
