//! Light base classifiers behind a uniform train / predict-posterior interface.
//!
//! Every learner produces a [`TrainedModel`], an immutable value that can be
//! serialized into a [`ModelBlob`] and shipped between devices and the server.
//! Serialization round-trips bit-exactly, so a model predicts the same
//! posteriors on both sides of the wire.

mod logistic;
mod naive_bayes;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{argmax_class, ClassId, Posterior};

pub use logistic::LogisticParams;
pub use naive_bayes::NaiveBayesParams;
pub use tree::{Tree, TreeNode};

pub(crate) use logistic::fit_logistic;

/// Anything that maps a feature vector to a class posterior.
pub trait Classifier {
    fn classes(&self) -> usize;
    fn dim(&self) -> usize;
    fn predict_posterior(&self, x: &[f64]) -> Result<Posterior>;

    fn predict(&self, x: &[f64]) -> Result<ClassId> {
        self.predict_posterior(x).map(|p| argmax_class(&p))
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// Learner family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerKind {
    GaussianNb,
    LinearLogistic {
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_l2")]
        l2: f64,
    },
    DecisionTree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

fn default_learning_rate() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    200
}
fn default_l2() -> f64 {
    1e-4
}
fn default_max_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    5
}

impl LearnerKind {
    pub fn logistic() -> Self {
        LearnerKind::LinearLogistic {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            l2: default_l2(),
        }
    }

    pub fn decision_tree() -> Self {
        LearnerKind::DecisionTree { max_depth: default_max_depth(), min_leaf: default_min_leaf() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::GaussianNb => "gaussian_nb",
            LearnerKind::LinearLogistic { .. } => "linear_logistic",
            LearnerKind::DecisionTree { .. } => "decision_tree",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerKind::GaussianNb => Ok(()),
            LearnerKind::LinearLogistic { learning_rate, epochs, l2 } => {
                if !(learning_rate > 0.0 && learning_rate.is_finite()) || epochs == 0 || !(l2 >= 0.0) {
                    return Err(Error::Config(format!(
                        "logistic hyperparameters must be positive (rate {learning_rate}, epochs {epochs}, l2 {l2})"
                    )));
                }
                Ok(())
            }
            LearnerKind::DecisionTree { max_depth, min_leaf } => {
                if max_depth == 0 || min_leaf == 0 {
                    return Err(Error::Config("tree max_depth and min_leaf must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

impl Default for LearnerKind {
    fn default() -> Self {
        Self::decision_tree()
    }
}

/// A borrowed labeled example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub label: ClassId,
}

impl<'a> Sample<'a> {
    pub fn new(features: &'a [f64], label: ClassId) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    GaussianNb(NaiveBayesParams),
    LinearLogistic(LogisticParams),
    DecisionTree(Tree),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    kind: LearnerKind,
    classes: usize,
    dim: usize,
    params: ModelParams,
}

/// Trains a base model on labeled data.
///
/// `classes` is the task's class count `C`; the data must contain at least
/// two distinct classes. Training is deterministic in `(kind, data order,
/// seed)`. None of the current learners consume randomness, so `seed` only
/// fixes the contract for stochastic learners added later.
pub fn train(kind: &LearnerKind, classes: usize, data: &[Sample<'_>], seed: u64) -> Result<TrainedModel> {
    let _ = seed;
    kind.validate()?;
    let first = data.first().ok_or(Error::Empty("training data"))?;
    let dim = first.features.len();
    if dim == 0 {
        return Err(Error::Empty("feature vector"));
    }
    let mut seen = vec![false; classes];
    for s in data {
        check_dim(dim, s.features)?;
        if s.label.0 >= classes {
            return Err(Error::ClassOutOfRange { index: s.label.0, classes });
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        seen[s.label.0] = true;
    }
    let found = seen.iter().filter(|s| **s).count();
    if found < 2 {
        return Err(Error::SingleClass { found });
    }
    let params = match *kind {
        LearnerKind::GaussianNb => ModelParams::GaussianNb(naive_bayes::fit(classes, dim, data)),
        LearnerKind::LinearLogistic { learning_rate, epochs, l2 } => {
            ModelParams::LinearLogistic(fit_logistic(classes, dim, data, learning_rate, epochs, l2).0)
        }
        LearnerKind::DecisionTree { max_depth, min_leaf } => {
            ModelParams::DecisionTree(tree::fit(classes, data, max_depth, min_leaf))
        }
    };
    Ok(TrainedModel { kind: kind.clone(), classes, dim, params })
}

impl TrainedModel {
    pub fn kind(&self) -> &LearnerKind {
        &self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl Classifier for TrainedModel {
    fn classes(&self) -> usize {
        self.classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_posterior(&self, x: &[f64]) -> Result<Posterior> {
        check_dim(self.dim, x)?;
        Ok(match &self.params {
            ModelParams::GaussianNb(p) => p.posterior(x),
            ModelParams::LinearLogistic(p) => p.posterior(x),
            ModelParams::DecisionTree(t) => t.posterior(x),
        })
    }
}

/// Serialized model payload exchanged between devices and the server.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelBlob(pub Vec<u8>);

impl ModelBlob {
    pub fn encode<T: Serialize>(value: &T) -> Self {
        // Plain data types: serialization cannot fail.
        Self(serde_json::to_vec(value).expect("model serialization"))
    }

    pub fn decode<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        Ok(serde_json::from_slice(&self.0)?)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
