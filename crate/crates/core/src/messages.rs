//! Payloads exchanged between devices and the server.
//!
//! Models travel as [`ModelBlob`]s: a device's whole local ensemble
//! serialized, so every party predicts with bit-identical parameters.

use serde::{Deserialize, Serialize};

use crate::learners::ModelBlob;
use crate::types::DeviceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoundId(pub u64);

/// Which model of a voting round an evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelRef {
    Candidate,
    Member(DeviceId),
}

/// A device's new or updated local model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpload {
    pub device: DeviceId,
    pub blob: ModelBlob,
    /// Sequence number of the instance that triggered the upload.
    pub seq: u64,
}

/// Server asks `evaluator` to score a model on its labeled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub round: RoundId,
    pub evaluator: DeviceId,
    pub model: ModelRef,
    pub blob: ModelBlob,
}

/// `accuracy` is `None` when the device cannot answer (offline, no
/// labeled data or an unreadable blob).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    pub round: RoundId,
    pub device: DeviceId,
    pub model: ModelRef,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModelBroadcast {
    /// Increments on every membership or model change.
    pub version: u64,
    pub blob: ModelBlob,
}
