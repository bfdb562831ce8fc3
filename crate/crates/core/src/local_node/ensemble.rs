use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::drift::clamp_confidence;
use crate::error::{Error, Result};
use crate::learners::{Classifier, TrainedModel};
use crate::types::{argmax_class, Posterior};

/// FIFO ensemble of base models combined with the per-class median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEnsemble {
    models: VecDeque<TrainedModel>,
    capacity: usize,
}

impl LocalEnsemble {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "ensemble capacity must be at least one");
        Self { models: VecDeque::with_capacity(capacity), capacity }
    }

    /// Adds a model, returning the evicted oldest member when full.
    pub fn push(&mut self, model: TrainedModel) -> Option<TrainedModel> {
        let evicted = if self.models.len() == self.capacity { self.models.pop_front() } else { None };
        self.models.push_back(model);
        evicted
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn models(&self) -> impl Iterator<Item = &TrainedModel> {
        self.models.iter()
    }

    /// Confidence fed to the drift detector: the combined posterior of the
    /// predicted class, clamped away from 0 and 1.
    pub fn confidence(&self, x: &[f64]) -> Result<f64> {
        let p = self.predict_posterior(x)?;
        Ok(clamp_confidence(p.probs()[argmax_class(&p).0]))
    }
}

/// Median of each class's probability across member posteriors (mean of
/// the two central values for an even count), renormalized to sum to one.
pub fn median_rule(posteriors: &[Posterior]) -> Result<Posterior> {
    let first = posteriors.first().ok_or(Error::Empty("ensemble"))?;
    let classes = first.classes();
    let mut column = Vec::with_capacity(posteriors.len());
    let medians = (0..classes)
        .map(|k| {
            column.clear();
            column.extend(posteriors.iter().map(|p| p.probs()[k]));
            column.sort_by(f64::total_cmp);
            let m = column.len();
            if m % 2 == 1 {
                column[m / 2]
            } else {
                (column[m / 2 - 1] + column[m / 2]) / 2.0
            }
        })
        .collect();
    Ok(Posterior::from_weights(medians))
}

impl Classifier for LocalEnsemble {
    fn classes(&self) -> usize {
        self.models.front().map_or(0, |m| m.classes())
    }

    fn dim(&self) -> usize {
        self.models.front().map_or(0, |m| m.dim())
    }

    fn predict_posterior(&self, x: &[f64]) -> Result<Posterior> {
        let posteriors = self.models.iter().map(|m| m.predict_posterior(x)).collect::<Result<Vec<_>>>()?;
        median_rule(&posteriors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ClassId;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Posterior {
        Posterior::new(v.to_vec()).unwrap()
    }

    #[test]
    fn median_of_one_is_identity() {
        let out = median_rule(&[p(&[0.7, 0.3])]).unwrap();
        assert_eq!(out.probs(), &[0.7, 0.3]);
    }

    #[test]
    fn three_member_example() {
        let out = median_rule(&[p(&[0.9, 0.1]), p(&[0.2, 0.8]), p(&[0.6, 0.4])]).unwrap();
        assert!((out.probs()[0] - 0.6).abs() < 1e-12);
        assert!((out.probs()[1] - 0.4).abs() < 1e-12);
        assert_eq!(argmax_class(&out), ClassId(0));
        assert!((clamp_confidence(out.confidence()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn identical_members_are_idempotent() {
        let shared = p(&[0.25, 0.35, 0.4]);
        let out = median_rule(&[shared.clone(), shared.clone(), shared.clone()]).unwrap();
        for (a, b) in out.probs().iter().zip(shared.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn even_count_averages_central_values_and_renormalizes() {
        // Class 0 medians (0.3+0.6)/2, class 1 (0.4+0.7)/2, class 2 0.0 → sum 1.0 here by construction.
        let out = median_rule(&[p(&[0.3, 0.7, 0.0]), p(&[0.6, 0.4, 0.0])]).unwrap();
        assert!((out.probs()[0] - 0.45).abs() < 1e-12);
        // Medians that do not sum to one get rescaled.
        let out = median_rule(&[p(&[0.5, 0.25, 0.25]), p(&[0.25, 0.5, 0.25]), p(&[0.25, 0.25, 0.5])]).unwrap();
        assert_eq!(out.probs(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        assert!(median_rule(&[]).is_err());
    }

    #[test]
    fn clamps_saturated_confidence() {
        assert_eq!(clamp_confidence(1.0), 1.0 - 1e-6);
    }

    proptest! {
        #[test]
        fn median_of_valid_posteriors_is_valid(
            raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..8)
        ) {
            let posts: Vec<_> = raw.into_iter().map(Posterior::from_weights).collect();
            let out = median_rule(&posts).unwrap();
            prop_assert!(Posterior::new(out.probs().to_vec()).is_ok());
        }

        #[test]
        fn unanimous_odd_ensembles_keep_the_shared_argmax(
            raw in proptest::collection::vec((0.5f64..1.0, 0.0f64..0.5), 1..5)
        ) {
            // Odd member count, every member prefers class 0.
            let mut posts: Vec<_> = raw.iter().map(|&(a, b)| Posterior::from_weights(vec![a, b])).collect();
            if posts.len() % 2 == 0 {
                posts.pop();
            }
            prop_assume!(posts.iter().all(|p| argmax_class(p) == ClassId(0)));
            prop_assert_eq!(argmax_class(&median_rule(&posts).unwrap()), ClassId(0));
        }
    }
}
