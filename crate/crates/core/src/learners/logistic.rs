use serde::{Deserialize, Serialize};

use super::Sample;
use crate::types::Posterior;

/// Multinomial logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// One row of weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticParams {
    fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(z).map(|(wi, zi)| wi * zi).sum::<f64>())
            .collect()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.feature_mean.iter().zip(&self.feature_scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub(super) fn posterior(&self, x: &[f64]) -> Posterior {
        Posterior::from_log_weights(&self.logits(&self.standardize(x)))
    }
}

/// Full-batch gradient descent on L2-regularized cross-entropy from a zero
/// start. Returns the parameters and the loss before each epoch plus the
/// final loss.
pub(crate) fn fit_logistic(
    classes: usize,
    dim: usize,
    data: &[Sample<'_>],
    learning_rate: f64,
    epochs: usize,
    l2: f64,
) -> (LogisticParams, Vec<f64>) {
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in data {
        for (m, v) in mean.iter_mut().zip(s.features) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; dim];
    for s in data {
        for j in 0..dim {
            let d = s.features[j] - mean[j];
            scale[j] += d * d / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let mut params = LogisticParams {
        feature_mean: mean,
        feature_scale: scale,
        weights: vec![vec![0.0; dim]; classes],
        bias: vec![0.0; classes],
    };
    let z: Vec<Vec<f64>> = data.iter().map(|s| params.standardize(s.features)).collect();

    let mut history = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let mut grad_w = vec![vec![0.0; dim]; classes];
        let mut grad_b = vec![0.0; classes];
        let mut loss = 0.0;
        for (zi, s) in z.iter().zip(data) {
            let p = Posterior::from_log_weights(&params.logits(zi));
            loss -= p.probs()[s.label.0].max(f64::MIN_POSITIVE).ln();
            for c in 0..classes {
                let err = p.probs()[c] - if c == s.label.0 { 1.0 } else { 0.0 };
                grad_b[c] += err / n;
                for j in 0..dim {
                    grad_w[c][j] += err * zi[j] / n;
                }
            }
        }
        history.push(loss / n + penalty(&params, l2));
        for c in 0..classes {
            params.bias[c] -= learning_rate * grad_b[c];
            for (w, g) in params.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= learning_rate * (g + l2 * *w);
            }
        }
    }
    history.push(total_loss(&params, &z, data, l2));
    (params, history)
}

fn penalty(params: &LogisticParams, l2: f64) -> f64 {
    0.5 * l2 * params.weights.iter().flatten().map(|w| w * w).sum::<f64>()
}

fn total_loss(params: &LogisticParams, z: &[Vec<f64>], data: &[Sample<'_>], l2: f64) -> f64 {
    let n = data.len() as f64;
    let nll: f64 = z
        .iter()
        .zip(data)
        .map(|(zi, s)| -Posterior::from_log_weights(&params.logits(zi)).probs()[s.label.0].max(f64::MIN_POSITIVE).ln())
        .sum();
    nll / n + penalty(params, l2)
}
