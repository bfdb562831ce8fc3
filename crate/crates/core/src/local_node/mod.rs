//! Per-device learning loop.
//!
//! A node keeps a sliding window of recent instances with the confidence of
//! its local ensemble on each of them. Unlabeled instances are pseudo-labeled
//! by the latest global model when it is confident enough. The first base
//! model is trained as soon as every class has enough labeled examples in the
//! window; afterwards, a new base model is trained only when the drift
//! detector fires, and the window is then emptied.

mod ensemble;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ensemble::{median_rule, LocalEnsemble};

use crate::drift::{DetectorConfig, DriftDecision, DriftDetector, DriftWindow};
use crate::error::{Error, Result};
use crate::learners::{self, check_dim, Classifier, LearnerKind, ModelBlob, Sample};
use crate::messages::{EvaluationRequest, EvaluationResponse, GlobalModelBroadcast, ModelUpload};
use crate::server::GlobalEnsemble;
use crate::types::{argmax_class, ClassId, DeviceId, Instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalConfig {
    /// Minimum sub-window length `Δ` of the drift scan.
    #[serde(default = "default_delta")]
    pub delta: usize,
    /// Drift sensitivity; the detection threshold is `-ln α`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Pseudo-label acceptance threshold on the global model's confidence.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Local ensemble capacity `M_l`.
    #[serde(default = "default_max_models")]
    pub max_models: usize,
    /// Labeled-data budget `L`; every class needs `ceil(L / 2C)` examples.
    /// Defaults to `2Δ`.
    #[serde(default)]
    pub min_labeled: Option<usize>,
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Random `e^{-2ς}` gate in front of every drift scan.
    #[serde(default = "default_true")]
    pub gating: bool,
    #[serde(default)]
    pub learner: LearnerKind,
}

fn default_delta() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.9
}
fn default_max_models() -> usize {
    5
}
fn default_classes() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            alpha: default_alpha(),
            gamma: default_gamma(),
            max_models: default_max_models(),
            min_labeled: None,
            classes: default_classes(),
            gating: true,
            learner: LearnerKind::default(),
        }
    }
}

impl LocalConfig {
    pub fn min_labeled(&self) -> usize {
        self.min_labeled.unwrap_or(2 * self.delta)
    }

    /// Per-class floor `ceil(L / 2C)`.
    pub fn per_class_minimum(&self) -> usize {
        self.min_labeled().div_ceil(2 * self.classes)
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig { delta: self.delta, alpha: self.alpha, gating: self.gating }
    }

    /// Fills derived defaults in place.
    pub fn resolve(&mut self) {
        self.min_labeled = Some(self.min_labeled());
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.delta < 1 {
            return bad("delta must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.max_models < 1 {
            return bad("max_models must be at least 1".into());
        }
        if self.classes < 2 {
            return bad("at least two classes are required".into());
        }
        if self.min_labeled() < self.classes {
            return bad(format!("min_labeled ({}) must be at least the class count", self.min_labeled()));
        }
        self.learner.validate()
    }
}

/// True iff every class has at least `ceil(L / 2C)` labeled examples.
pub fn training_gate(labeled_counts: &[usize], min_labeled: usize, classes: usize) -> bool {
    let floor = min_labeled.div_ceil(2 * classes);
    labeled_counts.len() == classes && labeled_counts.iter().all(|&c| c >= floor)
}

/// A label accepted from the global model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub class: ClassId,
    pub confidence: f64,
}

/// Labels `x` with the global prediction iff its confidence is at least
/// `gamma`.
pub fn transduce(x: &[f64], global: &impl Classifier, gamma: f64) -> Result<Option<PseudoLabel>> {
    let p = global.predict_posterior(x)?;
    let class = argmax_class(&p);
    let confidence = p.probs()[class.0];
    Ok((confidence >= gamma).then_some(PseudoLabel { class, confidence }))
}

/// Window payload: the instance, plus the global confidence when its label
/// came from transduction.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowItem {
    pub instance: Instance,
    pub pseudo_confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainReason {
    Initial,
    Drift,
}

/// Outbound node events, in the order they happened.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    DriftFired { device: DeviceId, seq: u64, decision: DriftDecision },
    ModelTrained { device: DeviceId, seq: u64, reason: TrainReason, ensemble_size: usize },
    RetrainSkipped { device: DeviceId, seq: u64, labeled_counts: Vec<usize> },
    Upload(ModelUpload),
}

/// State of one device.
#[derive(Debug, Clone)]
pub struct LocalNode {
    device: DeviceId,
    dim: usize,
    config: LocalConfig,
    ensemble: LocalEnsemble,
    detector: DriftDetector<WindowItem>,
    labeled_counts: Vec<usize>,
    global: Option<GlobalEnsemble>,
    global_version: Option<u64>,
    rng: ChaCha8Rng,
    trainings: u64,
    last_seq: Option<u64>,
}

impl LocalNode {
    pub fn new(device: DeviceId, dim: usize, config: LocalConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::Empty("feature vector"));
        }
        Ok(Self {
            device,
            dim,
            ensemble: LocalEnsemble::new(config.max_models),
            detector: DriftDetector::new(config.detector()),
            labeled_counts: vec![0; config.classes],
            global: None,
            global_version: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trainings: 0,
            last_seq: None,
            config,
        })
    }

    pub fn device(&self) -> DeviceId {
        self.device
    }

    pub fn config(&self) -> &LocalConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &LocalEnsemble {
        &self.ensemble
    }

    pub fn window(&self) -> &DriftWindow<WindowItem> {
        self.detector.window()
    }

    pub fn labeled_counts(&self) -> &[usize] {
        &self.labeled_counts
    }

    pub fn global_model(&self) -> Option<&GlobalEnsemble> {
        self.global.as_ref()
    }

    pub fn trainings(&self) -> u64 {
        self.trainings
    }

    /// Recount of labeled window entries, for auditing the running counts.
    pub fn recount_labeled(&self) -> Vec<usize> {
        let mut counts = vec![0; self.config.classes];
        for (item, _) in self.window().iter() {
            if let Some(c) = item.instance.label {
                counts[c.0] += 1;
            }
        }
        counts
    }

    /// Processes one instance from this device's stream.
    pub fn ingest(&mut self, mut instance: Instance) -> Result<Vec<NodeEvent>> {
        check_dim(self.dim, &instance.features)?;
        if instance.device != self.device {
            return Err(Error::Data(format!(
                "device {} received an instance of device {}",
                self.device, instance.device
            )));
        }
        if let Some(label) = instance.label {
            if label.0 >= self.config.classes {
                return Err(Error::ClassOutOfRange { index: label.0, classes: self.config.classes });
            }
        }
        if self.last_seq.is_some_and(|s| instance.seq <= s) {
            return Err(Error::Data(format!("non-increasing sequence number {}", instance.seq)));
        }
        self.last_seq = Some(instance.seq);
        let seq = instance.seq;

        let mut pseudo_confidence = None;
        if instance.label.is_none() {
            if let Some(global) = &self.global {
                if let Some(pl) = transduce(&instance.features, global, self.config.gamma)? {
                    debug_assert!(pl.confidence >= self.config.gamma);
                    instance.label = Some(pl.class);
                    pseudo_confidence = Some(pl.confidence);
                }
            }
        }
        if let Some(c) = instance.label {
            self.labeled_counts[c.0] += 1;
        }

        let has_model = !self.ensemble.is_empty();
        // Placeholder until a model exists; the window is rescored right
        // after the first training.
        let confidence = if has_model { self.ensemble.confidence(&instance.features)? } else { 0.5 };
        let scan_enabled = has_model && self.gate_open();
        let item = WindowItem { instance, pseudo_confidence };
        let observation = self.detector.observe(item, confidence, &mut self.rng, scan_enabled);
        if let Some(old) = observation.evicted {
            if let Some(c) = old.instance.label {
                self.labeled_counts[c.0] -= 1;
            }
        }

        let mut events = Vec::new();
        if !has_model {
            if self.gate_open() {
                self.train_and_push(seq, TrainReason::Initial, &mut events)?;
                let ensemble = &self.ensemble;
                self.detector.window_mut().rescore(|item| ensemble.confidence(&item.instance.features).unwrap_or(0.5));
            }
        } else if observation.decision.fired {
            events.push(NodeEvent::DriftFired { device: self.device, seq, decision: observation.decision });
            events.extend(self.adapt_to_drift(seq)?);
        }
        Ok(events)
    }

    fn gate_open(&self) -> bool {
        training_gate(&self.labeled_counts, self.config.min_labeled(), self.config.classes)
    }

    /// Trains a new base model from the window's labeled data, then empties
    /// the window. When the labeled data does not pass the training gate,
    /// the current ensemble stays in service and only the window is reset.
    pub fn adapt_to_drift(&mut self, seq: u64) -> Result<Vec<NodeEvent>> {
        let mut events = Vec::new();
        if self.gate_open() {
            self.train_and_push(seq, TrainReason::Drift, &mut events)?;
        } else {
            log::info!(
                "device {}: drift retrain skipped, labeled counts {:?} below {} per class",
                self.device,
                self.labeled_counts,
                self.config.per_class_minimum()
            );
            events.push(NodeEvent::RetrainSkipped {
                device: self.device,
                seq,
                labeled_counts: self.labeled_counts.clone(),
            });
        }
        self.detector.window_mut().clear();
        self.labeled_counts.iter_mut().for_each(|c| *c = 0);
        Ok(events)
    }

    fn train_and_push(&mut self, seq: u64, reason: TrainReason, events: &mut Vec<NodeEvent>) -> Result<()> {
        let samples: Vec<Sample<'_>> = self
            .window()
            .iter()
            .filter_map(|(item, _)| item.instance.label.map(|y| Sample::new(&item.instance.features, y)))
            .collect();
        let model = learners::train(&self.config.learner, self.config.classes, &samples, self.trainings)?;
        self.ensemble.push(model);
        self.trainings += 1;
        events.push(NodeEvent::ModelTrained { device: self.device, seq, reason, ensemble_size: self.ensemble.len() });
        events.push(NodeEvent::Upload(self.upload(seq)));
        Ok(())
    }

    /// Current local model as an upload payload.
    pub fn upload(&self, seq: u64) -> ModelUpload {
        ModelUpload { device: self.device, blob: ModelBlob::encode(&self.ensemble), seq }
    }

    /// Plain accuracy of `model` on every labeled instance in the window,
    /// pseudo-labels included.
    pub fn evaluate_candidate(&self, model: &impl Classifier) -> Result<f64> {
        let mut total = 0usize;
        let mut hits = 0usize;
        for (item, _) in self.window().iter() {
            if let Some(y) = item.instance.label {
                total += 1;
                if model.predict(&item.instance.features)? == y {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            return Err(Error::NoLabeledData);
        }
        Ok(hits as f64 / total as f64)
    }

    pub fn handle_evaluation(&self, request: &EvaluationRequest) -> EvaluationResponse {
        let accuracy = request.blob.decode::<LocalEnsemble>().and_then(|model| self.evaluate_candidate(&model)).ok();
        EvaluationResponse { round: request.round, device: self.device, model: request.model, accuracy }
    }

    /// Installs a newer global model; stale or unreadable broadcasts are
    /// ignored.
    pub fn receive_broadcast(&mut self, broadcast: &GlobalModelBroadcast) -> Result<()> {
        if self.global_version.is_some_and(|v| broadcast.version <= v) {
            return Ok(());
        }
        let global: GlobalEnsemble = broadcast.blob.decode()?;
        self.global = Some(global);
        self.global_version = Some(broadcast.version);
        Ok(())
    }
}
