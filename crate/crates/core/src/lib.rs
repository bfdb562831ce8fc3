//! Federated continual learning on device streams: local median-rule
//! ensembles with confidence-based drift detection, semi-supervised
//! pseudo-labeling, and a product-rule global ensemble whose members are
//! chosen by distributed voting.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod error;
pub mod learners;
pub mod local_node;
pub mod messages;
pub mod metrics;
pub mod server;
pub mod sim;
pub mod special;
pub mod types;

pub use error::{Error, Result};
pub use types::{argmax_class, ClassId, DeviceId, Instance, Posterior};
