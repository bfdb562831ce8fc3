use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::local_node::LocalEnsemble;
use crate::types::{DeviceId, Posterior};

/// Member probabilities are floored here before taking logs so that one
/// confident member cannot zero out a class on its own.
pub const PRODUCT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMember {
    pub device: DeviceId,
    pub model: LocalEnsemble,
    /// Significance index from the last voting round the member took part in.
    pub significance: i64,
    /// Mean evaluator accuracy from that round.
    pub mean_accuracy: f64,
    /// Server-wide submission counter of the member's first admission.
    pub submitted: u64,
}

/// At most `capacity` local models, one per device, combined by the
/// product rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEnsemble {
    members: Vec<GlobalMember>,
    capacity: usize,
}

impl GlobalEnsemble {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "global capacity must be at least one");
        Self { members: Vec::with_capacity(capacity), capacity }
    }

    pub fn members(&self) -> &[GlobalMember] {
        &self.members
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, device: DeviceId) -> bool {
        self.member(device).is_some()
    }

    pub fn member(&self, device: DeviceId) -> Option<&GlobalMember> {
        self.members.iter().find(|m| m.device == device)
    }

    pub(crate) fn member_mut(&mut self, device: DeviceId) -> Option<&mut GlobalMember> {
        self.members.iter_mut().find(|m| m.device == device)
    }

    pub(crate) fn insert(&mut self, member: GlobalMember) -> Result<()> {
        if self.contains(member.device) {
            return Err(Error::Data(format!("device {} is already a member", member.device)));
        }
        if self.members.len() >= self.capacity {
            return Err(Error::Data("global ensemble is full".into()));
        }
        self.members.push(member);
        Ok(())
    }

    pub(crate) fn remove(&mut self, device: DeviceId) -> Option<GlobalMember> {
        let at = self.members.iter().position(|m| m.device == device)?;
        Some(self.members.remove(at))
    }
}

/// Per-class product of member posteriors, computed as a sum of logs over
/// floored probabilities and normalized.
pub fn product_rule(posteriors: &[Posterior]) -> Result<Posterior> {
    let first = posteriors.first().ok_or(Error::Empty("ensemble"))?;
    let mut log_sum = vec![0.0; first.classes()];
    for p in posteriors {
        for (acc, v) in log_sum.iter_mut().zip(p.probs()) {
            *acc += v.max(PRODUCT_FLOOR).ln();
        }
    }
    Ok(Posterior::from_log_weights(&log_sum))
}

impl Classifier for GlobalEnsemble {
    fn classes(&self) -> usize {
        self.members.first().map_or(0, |m| m.model.classes())
    }

    fn dim(&self) -> usize {
        self.members.first().map_or(0, |m| m.model.dim())
    }

    fn predict_posterior(&self, x: &[f64]) -> Result<Posterior> {
        let posteriors = self.members.iter().map(|m| m.model.predict_posterior(x)).collect::<Result<Vec<_>>>()?;
        product_rule(&posteriors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::argmax_class;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Posterior {
        Posterior::new(v.to_vec()).unwrap()
    }

    #[test]
    fn product_examples() {
        let single = product_rule(&[p(&[0.7, 0.3])]).unwrap();
        assert!((single.probs()[0] - 0.7).abs() < 1e-9);

        let two = product_rule(&[p(&[0.8, 0.2]), p(&[0.6, 0.4])]).unwrap();
        assert!((two.probs()[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!((two.probs()[1] - 1.0 / 7.0).abs() < 1e-12);

        let with_uniform = product_rule(&[p(&[0.8, 0.2]), p(&[0.5, 0.5]), p(&[0.6, 0.4])]).unwrap();
        for (a, b) in with_uniform.probs().iter().zip(two.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(product_rule(&[]).is_err());
    }

    #[test]
    fn floor_keeps_a_vetoed_class_alive() {
        // ln(1e-9) ≈ -20.7 outweighs five members at ln(0.01) ≈ -4.6 each.
        let mut members = vec![p(&[1.0, 0.0])];
        members.extend(std::iter::repeat_n(p(&[0.01, 0.99]), 5));
        let out = product_rule(&members).unwrap();
        assert_eq!(argmax_class(&out).0, 1);
    }

    proptest! {
        #[test]
        fn argmax_ignores_member_order(
            raw in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..7),
            rot in 0usize..7,
        ) {
            let posts: Vec<_> = raw.into_iter().map(Posterior::from_weights).collect();
            let mut rotated = posts.clone();
            rotated.rotate_left(rot % posts.len());
            rotated.reverse();
            let a = product_rule(&posts).unwrap();
            let b = product_rule(&rotated).unwrap();
            prop_assert_eq!(argmax_class(&a), argmax_class(&b));
            prop_assert!(Posterior::new(a.probs().to_vec()).is_ok());
        }
    }
}
