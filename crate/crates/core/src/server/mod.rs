//! Global model management.
//!
//! The server keeps at most `M_g` local models, one per device, combined by
//! the product rule. A model from a device that is already a member replaces
//! its predecessor in place. Any other model competes for a seat through a
//! voting round: `p` randomly chosen devices score the candidate and every
//! current member on their own labeled data, the first `q` complete answers
//! are compared pairwise with paired t-tests, and the `M_g` models with the
//! highest significance index survive (ties go to the higher mean accuracy,
//! then to the earlier submission).

mod ensemble;
mod ttest;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ensemble::{product_rule, GlobalEnsemble, GlobalMember, PRODUCT_FLOOR};
pub use ttest::{paired_t, paired_t_test, significance_indices, PairedT, TTestOutcome};

use crate::error::{Error, Result};
use crate::learners::ModelBlob;
use crate::local_node::LocalEnsemble;
use crate::messages::{EvaluationRequest, EvaluationResponse, GlobalModelBroadcast, ModelRef, ModelUpload, RoundId};
use crate::types::DeviceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// Global ensemble capacity `M_g`.
    #[serde(default = "default_members")]
    pub max_members: usize,
    /// Evaluators asked per round (`p`); defaults to `M_g`.
    #[serde(default)]
    pub evaluators: Option<usize>,
    /// Complete answers required per round (`q`); defaults to `M_g`.
    #[serde(default)]
    pub quorum: Option<usize>,
    #[serde(default = "default_level")]
    pub significance_level: f64,
}

fn default_members() -> usize {
    5
}
fn default_level() -> f64 {
    0.05
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { max_members: default_members(), evaluators: None, quorum: None, significance_level: default_level() }
    }
}

impl ServerConfig {
    pub fn evaluators(&self) -> usize {
        self.evaluators.unwrap_or(self.max_members)
    }

    pub fn quorum(&self) -> usize {
        self.quorum.unwrap_or(self.max_members)
    }

    pub fn resolve(&mut self) {
        self.evaluators = Some(self.evaluators());
        self.quorum = Some(self.quorum());
    }

    /// Checks `M_g ≤ q ≤ p ≤ devices`.
    pub fn validate(&self, devices: usize) -> Result<()> {
        let (m, q, p) = (self.max_members, self.quorum(), self.evaluators());
        if m < 1 {
            return Err(Error::Config("max_members must be at least 1".into()));
        }
        if !(m <= q && q <= p && p <= devices) {
            return Err(Error::Config(format!(
                "need max_members <= quorum <= evaluators <= devices, got {m} <= {q} <= {p} <= {devices}"
            )));
        }
        if !(self.significance_level > 0.0 && self.significance_level < 1.0) {
            return Err(Error::Config("significance_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Membership changes, for the event log.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerEvent {
    Admitted {
        device: DeviceId,
        round: RoundId,
        significance: i64,
        evicted: Option<DeviceId>,
    },
    Rejected {
        device: DeviceId,
        round: RoundId,
        significance: i64,
    },
    /// Fewer than `q` evaluators could answer.
    Aborted {
        device: DeviceId,
        round: RoundId,
        responses: usize,
    },
    Replaced {
        device: DeviceId,
    },
    Broadcast {
        version: u64,
        members: Vec<DeviceId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerOutput {
    Request(EvaluationRequest),
    Broadcast(GlobalModelBroadcast),
    Event(ServerEvent),
}

/// One voting round in flight.
#[derive(Debug, Clone)]
pub struct DevRound {
    pub id: RoundId,
    pub candidate: DeviceId,
    candidate_model: LocalEnsemble,
    submitted: u64,
    /// Members at round start, in ensemble order.
    members: Vec<DeviceId>,
    pub evaluators: Vec<DeviceId>,
    answers: BTreeMap<DeviceId, BTreeMap<ModelRef, f64>>,
    declined: BTreeSet<DeviceId>,
    /// Evaluators with a full set of answers, in completion order.
    complete: Vec<DeviceId>,
}

impl DevRound {
    fn models(&self) -> impl Iterator<Item = ModelRef> + '_ {
        self.members.iter().map(|&d| ModelRef::Member(d)).chain(std::iter::once(ModelRef::Candidate))
    }

    pub fn responses(&self) -> usize {
        self.complete.len()
    }
}

#[derive(Debug)]
pub struct Server {
    config: ServerConfig,
    devices: Vec<DeviceId>,
    ensemble: GlobalEnsemble,
    rounds: BTreeMap<RoundId, DevRound>,
    next_round: u64,
    submissions: u64,
    version: u64,
    rng: ChaCha8Rng,
}

impl Server {
    pub fn new(config: ServerConfig, devices: Vec<DeviceId>, seed: u64) -> Result<Self> {
        config.validate(devices.len())?;
        Ok(Self {
            ensemble: GlobalEnsemble::new(config.max_members),
            config,
            devices,
            rounds: BTreeMap::new(),
            next_round: 0,
            submissions: 0,
            version: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn ensemble(&self) -> &GlobalEnsemble {
        &self.ensemble
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn open_rounds(&self) -> impl Iterator<Item = &DevRound> {
        self.rounds.values()
    }

    /// Current global model, or `None` while the ensemble is empty.
    pub fn broadcast(&self) -> Option<GlobalModelBroadcast> {
        (!self.ensemble.is_empty())
            .then(|| GlobalModelBroadcast { version: self.version, blob: ModelBlob::encode(&self.ensemble) })
    }

    fn changed(&mut self, out: &mut Vec<ServerOutput>) {
        self.version += 1;
        if let Some(b) = self.broadcast() {
            out.push(ServerOutput::Event(ServerEvent::Broadcast {
                version: b.version,
                members: self.ensemble.members().iter().map(|m| m.device).collect(),
            }));
            out.push(ServerOutput::Broadcast(b));
        }
    }

    /// Handles a model upload. A malformed blob is rejected without
    /// touching any state.
    pub fn submit_model(&mut self, upload: &ModelUpload) -> Result<Vec<ServerOutput>> {
        let model: LocalEnsemble = upload.blob.decode()?;
        if model.is_empty() {
            return Err(Error::Empty("uploaded ensemble"));
        }
        if !self.devices.contains(&upload.device) {
            return Err(Error::Data(format!("unknown device {}", upload.device)));
        }
        self.submissions += 1;
        let mut out = Vec::new();
        if let Some(member) = self.ensemble.member_mut(upload.device) {
            member.model = model;
            out.push(ServerOutput::Event(ServerEvent::Replaced { device: upload.device }));
            self.changed(&mut out);
            return Ok(out);
        }

        let id = RoundId(self.next_round);
        self.next_round += 1;
        let p = self.config.evaluators();
        // The candidate's own device is skipped when enough others exist: its
        // window was usually just emptied by the retrain that produced the
        // upload, and it would be grading its own training data.
        let pool: Vec<DeviceId> = if self.devices.len() > p {
            self.devices.iter().copied().filter(|&d| d != upload.device).collect()
        } else {
            self.devices.clone()
        };
        let evaluators: Vec<DeviceId> = {
            let mut picked: Vec<usize> = sample(&mut self.rng, pool.len(), p).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| pool[i]).collect()
        };
        let round = DevRound {
            id,
            candidate: upload.device,
            candidate_model: model,
            submitted: self.submissions,
            members: self.ensemble.members().iter().map(|m| m.device).collect(),
            evaluators,
            answers: BTreeMap::new(),
            declined: BTreeSet::new(),
            complete: Vec::new(),
        };
        for &evaluator in &round.evaluators {
            for model in round.models() {
                let blob = match model {
                    ModelRef::Candidate => upload.blob.clone(),
                    ModelRef::Member(d) => ModelBlob::encode(&self.ensemble.member(d).expect("snapshot member").model),
                };
                out.push(ServerOutput::Request(EvaluationRequest { round: id, evaluator, model, blob }));
            }
        }
        self.rounds.insert(id, round);
        Ok(out)
    }

    /// Records one evaluation answer. Answers for unknown rounds, from
    /// devices that were not asked, or arriving after the round closed are
    /// ignored.
    pub fn receive_response(&mut self, response: &EvaluationResponse) -> Result<Vec<ServerOutput>> {
        let Some(round) = self.rounds.get_mut(&response.round) else {
            return Ok(Vec::new());
        };
        let dev = response.device;
        if !round.evaluators.contains(&dev) || round.declined.contains(&dev) || round.complete.contains(&dev) {
            return Ok(Vec::new());
        }
        match response.accuracy {
            None => {
                round.declined.insert(dev);
                round.answers.remove(&dev);
            }
            Some(acc) => {
                let answers = round.answers.entry(dev).or_default();
                answers.insert(response.model, acc);
                if answers.len() == round.members.len() + 1 {
                    round.complete.push(dev);
                }
            }
        }
        let quorum = self.config.quorum();
        let resolved = round.complete.len() + round.declined.len();
        if round.complete.len() >= quorum {
            let round = self.rounds.remove(&response.round).expect("round present");
            self.finish_round(round)
        } else if resolved == round.evaluators.len() {
            let round = self.rounds.remove(&response.round).expect("round present");
            log::info!("round {:?} for device {} aborted: {} answers", round.id, round.candidate, round.responses());
            Ok(vec![ServerOutput::Event(ServerEvent::Aborted {
                device: round.candidate,
                round: round.id,
                responses: round.responses(),
            })])
        } else {
            Ok(Vec::new())
        }
    }

    fn finish_round(&mut self, round: DevRound) -> Result<Vec<ServerOutput>> {
        let quorum = self.config.quorum();
        let voters = &round.complete[..quorum];
        let models: Vec<ModelRef> = round.models().collect();
        let accuracies: Vec<Vec<f64>> =
            models.iter().map(|m| voters.iter().map(|v| round.answers[v][m]).collect()).collect();
        let scores = significance_indices(&accuracies, self.config.significance_level)?;
        let means: Vec<f64> = accuracies.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect();
        let submitted: Vec<u64> = models
            .iter()
            .map(|m| match m {
                ModelRef::Candidate => round.submitted,
                ModelRef::Member(d) => self.ensemble.member(*d).map_or(0, |mm| mm.submitted),
            })
            .collect();

        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].cmp(&scores[a]).then(means[b].total_cmp(&means[a])).then(submitted[a].cmp(&submitted[b]))
        });
        let keep: BTreeSet<usize> = order.iter().copied().take(self.config.max_members).collect();

        for (i, m) in models.iter().enumerate() {
            if let ModelRef::Member(d) = m {
                if let Some(member) = self.ensemble.member_mut(*d) {
                    member.significance = scores[i];
                    member.mean_accuracy = means[i];
                }
            }
        }

        let mut out = Vec::new();
        let cand = models.len() - 1;
        if !keep.contains(&cand) {
            out.push(ServerOutput::Event(ServerEvent::Rejected {
                device: round.candidate,
                round: round.id,
                significance: scores[cand],
            }));
            return Ok(out);
        }
        if let Some(member) = self.ensemble.member_mut(round.candidate) {
            // Admitted through another round while this one was open.
            member.model = round.candidate_model;
            out.push(ServerOutput::Event(ServerEvent::Replaced { device: round.candidate }));
            self.changed(&mut out);
            return Ok(out);
        }
        let mut evicted = None;
        for &i in order.iter().rev() {
            if self.ensemble.len() < self.ensemble.capacity() {
                break;
            }
            if let ModelRef::Member(d) = models[i] {
                if !keep.contains(&i) && self.ensemble.remove(d).is_some() {
                    evicted = Some(d);
                }
            }
        }
        if self.ensemble.len() >= self.ensemble.capacity() {
            // Membership changed since the round opened; drop the weakest
            // current member instead.
            let weakest = self
                .ensemble
                .members()
                .iter()
                .min_by(|a, b| {
                    a.significance
                        .cmp(&b.significance)
                        .then(a.mean_accuracy.total_cmp(&b.mean_accuracy))
                        .then(b.submitted.cmp(&a.submitted))
                })
                .map(|m| m.device)
                .expect("full ensemble has members");
            self.ensemble.remove(weakest);
            evicted = Some(weakest);
        }
        self.ensemble.insert(GlobalMember {
            device: round.candidate,
            model: round.candidate_model,
            significance: scores[cand],
            mean_accuracy: means[cand],
            submitted: round.submitted,
        })?;
        out.push(ServerOutput::Event(ServerEvent::Admitted {
            device: round.candidate,
            round: round.id,
            significance: scores[cand],
            evicted,
        }));
        self.changed(&mut out);
        Ok(out)
    }
}
