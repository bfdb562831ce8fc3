use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::data::{concept_swapped, scenario_dataset, Dataset};
use super::derive_seed;
use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::local_node::{LocalNode, NodeEvent};
use crate::messages::{EvaluationRequest, EvaluationResponse};
use crate::metrics::{classification_metrics, MetricsRecord, Subject};
use crate::server::{Server, ServerEvent, ServerOutput};
use crate::types::{ClassId, DeviceId, Instance};

/// One line of the event log. `device` is `None` for server-wide events.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEvent {
    pub iteration: u64,
    pub device: Option<DeviceId>,
    pub kind: &'static str,
    pub detail: String,
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.device {
            Some(d) => write!(f, "{},{},{},{}", self.iteration, d, self.kind, self.detail),
            None => write!(f, "{},server,{},{}", self.iteration, self.kind, self.detail),
        }
    }
}

#[derive(Debug)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<LogEvent>,
    pub nodes: Vec<LocalNode>,
    pub server: Server,
}

impl ScenarioOutput {
    pub fn global_at(&self, iteration: u64) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.iteration == iteration && r.subject == Subject::Global)
            .map(|r| r.metrics.balanced_accuracy)
    }

    pub fn locals_at(&self, iteration: u64) -> Vec<f64> {
        self.metrics
            .iter()
            .filter(|r| r.iteration == iteration && r.subject != Subject::Global)
            .map(|r| r.metrics.balanced_accuracy)
            .collect()
    }

    /// Global balanced accuracy at every evaluation point, in order.
    pub fn global_series(&self) -> Vec<(u64, f64)> {
        self.metrics
            .iter()
            .filter(|r| r.subject == Subject::Global)
            .map(|r| (r.iteration, r.metrics.balanced_accuracy))
            .collect()
    }

    pub fn global_members(&self) -> Vec<DeviceId> {
        self.server.ensemble().members().iter().map(|m| m.device).collect()
    }

    pub fn count(&self, kind: &str) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Generates the scenario's data and runs it.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let config = config.clone().resolved()?;
    let data = scenario_dataset(&config)?;
    run_dataset(&config, &data)
}

/// Runs the learning loop over prepared streams. Drift and poisoning must
/// already be applied to `data`; the drift schedule of `config` is used only
/// to label the test set at each evaluation.
pub fn run_dataset(config: &ScenarioConfig, data: &Dataset) -> Result<ScenarioOutput> {
    let config = config.clone().resolved()?;
    if data.streams.len() > config.devices.len() {
        return Err(Error::Config(format!(
            "data holds {} device streams but the config lists {} devices",
            data.streams.len(),
            config.devices.len()
        )));
    }
    if data.dim != config.data.dim {
        return Err(Error::DimensionMismatch { expected: config.data.dim, got: data.dim });
    }
    let mut sim = Sim::new(&config, data)?;
    for t in 1..=config.iterations {
        sim.step(t)?;
        if t % config.eval_interval == 0 || t == config.iterations {
            sim.evaluate(t)?;
        }
    }
    if sim.server.ensemble().is_empty() {
        return Err(Error::NoGlobalModel(config.iterations));
    }
    let Sim { metrics, events, nodes, server, .. } = sim;
    Ok(ScenarioOutput { config, metrics, events, nodes, server })
}

struct Sim<'a> {
    config: &'a ScenarioConfig,
    data: &'a Dataset,
    nodes: Vec<LocalNode>,
    server: Server,
    cursors: Vec<usize>,
    metrics: Vec<MetricsRecord>,
    events: Vec<LogEvent>,
}

impl<'a> Sim<'a> {
    fn new(config: &'a ScenarioConfig, data: &'a Dataset) -> Result<Self> {
        let seed = config.seed;
        let n = config.devices.len();
        let nodes = (0..n)
            .map(|i| {
                LocalNode::new(DeviceId(i as u32), data.dim, config.local.clone(), derive_seed(seed, "node", i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let devices = (0..n as u32).map(DeviceId).collect();
        let server = Server::new(config.server.clone(), devices, derive_seed(seed, "server", 0))?;
        Ok(Self { config, data, nodes, server, cursors: vec![0; n], metrics: Vec::new(), events: Vec::new() })
    }

    fn log(&mut self, t: u64, device: Option<DeviceId>, kind: &'static str, detail: String) {
        self.events.push(LogEvent { iteration: t, device, kind, detail });
    }

    /// Instances recorded at iteration `t`, by device index.
    fn arrivals(&mut self, t: u64) -> Vec<Option<Instance>> {
        let mut out = vec![None; self.nodes.len()];
        for (i, s) in self.data.streams.iter().enumerate() {
            if let Some(inst) = s.instances.get(self.cursors[i]).filter(|inst| inst.seq == t) {
                self.cursors[i] += 1;
                out[i] = Some(inst.clone());
            }
        }
        out
    }

    fn step(&mut self, t: u64) -> Result<()> {
        let arrivals = self.arrivals(t);
        if self.config.parallel {
            // All devices learn concurrently; their messages reach the
            // server afterwards, in device order.
            let results: Vec<Result<Vec<NodeEvent>>> = self
                .nodes
                .par_iter_mut()
                .zip(arrivals)
                .map(|(node, inst)| inst.map_or(Ok(Vec::new()), |i| node.ingest(i)))
                .collect();
            for events in results {
                self.route_node_events(t, events?)?;
            }
        } else {
            for (i, inst) in arrivals.into_iter().enumerate() {
                if let Some(inst) = inst {
                    let events = self.nodes[i].ingest(inst)?;
                    self.route_node_events(t, events)?;
                }
            }
        }
        Ok(())
    }

    fn route_node_events(&mut self, t: u64, events: Vec<NodeEvent>) -> Result<()> {
        for ev in events {
            match ev {
                NodeEvent::DriftFired { device, decision, .. } => {
                    let k = decision.change_point.map_or("none".to_string(), |k| k.to_string());
                    self.log(
                        t,
                        Some(device),
                        "drift_fired",
                        format!("change_point={k} score={:.4}", decision.score.unwrap_or(0.0)),
                    );
                }
                NodeEvent::ModelTrained { device, reason, ensemble_size, .. } => {
                    let reason = match reason {
                        crate::local_node::TrainReason::Initial => "initial",
                        crate::local_node::TrainReason::Drift => "drift",
                    };
                    self.log(
                        t,
                        Some(device),
                        "model_trained",
                        format!("reason={reason} ensemble_size={ensemble_size}"),
                    );
                }
                NodeEvent::RetrainSkipped { device, labeled_counts, .. } => {
                    log::info!("t={t} device {device}: retrain skipped, labeled counts {labeled_counts:?}");
                }
                NodeEvent::Upload(upload) => {
                    self.log(t, Some(upload.device), "model_uploaded", format!("bytes={}", upload.blob.len()));
                    match self.server.submit_model(&upload) {
                        Ok(out) => self.route_server_outputs(t, out)?,
                        Err(e) => {
                            log::warn!("t={t}: upload from device {} rejected: {e}", upload.device);
                            self.log(t, Some(upload.device), "dev_rejected", format!("malformed {e}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn respond(&self, t: u64, requests: &[EvaluationRequest]) -> Vec<EvaluationResponse> {
        let answer = |r: &EvaluationRequest| {
            let i = r.evaluator.0 as usize;
            if self.config.devices[i].is_offline(t) {
                EvaluationResponse { round: r.round, device: r.evaluator, model: r.model, accuracy: None }
            } else {
                self.nodes[i].handle_evaluation(r)
            }
        };
        if self.config.parallel {
            requests.par_iter().map(answer).collect()
        } else {
            requests.iter().map(answer).collect()
        }
    }

    /// Delivers server output until the exchange settles. Requests issued
    /// together are answered together, then fed back in request order.
    fn route_server_outputs(&mut self, t: u64, outputs: Vec<ServerOutput>) -> Result<()> {
        let mut queue: VecDeque<ServerOutput> = outputs.into();
        while let Some(out) = queue.pop_front() {
            match out {
                ServerOutput::Request(first) => {
                    let mut batch = vec![first];
                    while let Some(ServerOutput::Request(_)) = queue.front() {
                        if let Some(ServerOutput::Request(r)) = queue.pop_front() {
                            batch.push(r);
                        }
                    }
                    for resp in self.respond(t, &batch) {
                        queue.extend(self.server.receive_response(&resp)?);
                    }
                }
                ServerOutput::Event(e) => self.log_server_event(t, e),
                ServerOutput::Broadcast(b) => {
                    for node in &mut self.nodes {
                        node.receive_broadcast(&b)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn log_server_event(&mut self, t: u64, e: ServerEvent) {
        match e {
            ServerEvent::Admitted { device, round, significance, evicted } => {
                let ev = evicted.map_or("none".to_string(), |d| d.to_string());
                self.log(
                    t,
                    Some(device),
                    "dev_admitted",
                    format!("round={} significance={significance} evicted={ev}", round.0),
                );
            }
            ServerEvent::Rejected { device, round, significance } => {
                self.log(t, Some(device), "dev_rejected", format!("round={} significance={significance}", round.0));
            }
            ServerEvent::Aborted { device, round, responses } => {
                self.log(t, Some(device), "dev_rejected", format!("round={} aborted responses={responses}", round.0));
            }
            ServerEvent::Replaced { device } => self.log(t, Some(device), "member_replaced", String::new()),
            ServerEvent::Broadcast { version, members } => {
                let m: Vec<String> = members.iter().map(|d| d.to_string()).collect();
                self.log(t, None, "broadcast", format!("version={version} members={}", m.join("|")));
            }
        }
    }

    fn evaluate(&mut self, t: u64) -> Result<()> {
        let classes = self.data.classes;
        let swapped = concept_swapped(&self.config.drift, t);
        let truths: Vec<ClassId> = self
            .data
            .test
            .iter()
            .map(|ex| if swapped { ClassId(classes - 1 - ex.label.0) } else { ex.label })
            .collect();
        let positive = ClassId(self.config.positive_class);
        let parallel = self.config.parallel;
        let score = |model: &(dyn Fn(&[f64]) -> Result<ClassId> + Sync)| -> Result<_> {
            let preds: Result<Vec<ClassId>> = if parallel {
                self.data.test.par_iter().map(|ex| model(&ex.features)).collect()
            } else {
                self.data.test.iter().map(|ex| model(&ex.features)).collect()
            };
            classification_metrics(&preds?, &truths, positive)
        };
        let global = self.server.ensemble();
        if !global.is_empty() {
            let metrics = score(&|x| global.predict(x))?;
            self.metrics.push(MetricsRecord { iteration: t, subject: Subject::Global, metrics });
        }
        for node in &self.nodes {
            let local = node.ensemble();
            if local.is_empty() {
                continue;
            }
            let metrics = score(&|x| local.predict(x))?;
            self.metrics.push(MetricsRecord { iteration: t, subject: Subject::Device(node.device()), metrics });
        }
        Ok(())
    }
}
