//! Domain values shared by every part of the system.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a posterior vector.
pub const POSTERIOR_SUM_TOL: f64 = 1e-9;

/// Index of a class in `[0, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One observation from a device stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Option<ClassId>,
    pub device: DeviceId,
    pub seq: u64,
}

impl Instance {
    pub fn new(device: DeviceId, seq: u64, features: Vec<f64>, label: Option<ClassId>) -> Self {
        Self { features, label, device, seq }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

/// Per-class probabilities; every entry in `[0, 1]` and the total within
/// [`POSTERIOR_SUM_TOL`] of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    /// Validates an already-normalized vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPosterior(format!("{} classes", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidPosterior(format!("{probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOL {
            return Err(Error::InvalidPosterior(format!("sum {sum}")));
        }
        Ok(Self(probs))
    }

    /// Scales nonnegative weights to sum to one. All-zero (or non-finite)
    /// input yields the uniform posterior.
    pub fn from_weights(mut weights: Vec<f64>) -> Self {
        debug_assert!(weights.len() >= 2);
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            let n = weights.len() as f64;
            weights.iter_mut().for_each(|w| *w = 1.0 / n);
            return Self(weights);
        }
        for w in weights.iter_mut() {
            *w = (*w / sum).clamp(0.0, 1.0);
        }
        Self(weights)
    }

    /// Normalizes log-weights with the log-sum-exp shift.
    pub fn from_log_weights(log_weights: &[f64]) -> Self {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        Self::from_weights(weights)
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn prob(&self, class: ClassId) -> f64 {
        self.0[class.0]
    }

    /// Probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.0[argmax_class(self).0]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Smallest index attaining the maximum probability.
pub fn argmax_class(p: &Posterior) -> ClassId {
    argmax_index(p.probs())
}

pub(crate) fn argmax_index(values: &[f64]) -> ClassId {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    ClassId(best)
}
