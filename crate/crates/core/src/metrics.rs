//! Balanced accuracy, sensitivity and specificity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ClassId;

/// One-vs-rest rates against a positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Who a metrics row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subject {
    Global,
    Device(crate::types::DeviceId),
}

impl std::fmt::Display for Subject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subject::Global => f.write_str("global"),
            Subject::Device(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub subject: Subject,
    pub metrics: ClassificationMetrics,
}

pub fn classification_metrics(
    predictions: &[ClassId],
    truths: &[ClassId],
    positive: ClassId,
) -> Result<ClassificationMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: truths.len() });
    }
    if truths.is_empty() {
        return Err(Error::Empty("truths"));
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (p, t) in predictions.iter().zip(truths) {
        match (*t == positive, *p == positive) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::MissingClass("positive"));
    }
    if tn + fp == 0 {
        return Err(Error::MissingClass("negative"));
    }
    let sensitivity = tp as f64 / (tp + fn_) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    Ok(ClassificationMetrics { balanced_accuracy: (sensitivity + specificity) / 2.0, sensitivity, specificity })
}

/// Fraction of matching positions.
pub fn accuracy(predictions: &[ClassId], truths: &[ClassId]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: truths.len() });
    }
    if truths.is_empty() {
        return Err(Error::Empty("truths"));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truths.len() as f64)
}
