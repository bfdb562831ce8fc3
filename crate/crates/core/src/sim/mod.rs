//! Deterministic federation simulator on synthetic Gaussian-mixture streams.

mod config;
mod data;
mod io;
mod run;

pub use config::{
    ClassGenerator, Component, DataSpec, DeviceSpec, DriftKind, LocalDriftSpec, ScenarioConfig, ScheduledDrift,
};
pub use data::{
    bayes_balanced_accuracy, concept_swapped, inject_global_drift, inject_label_inversion, scenario_dataset,
    synth_generate, Dataset, DeviceStream, TestExample,
};
pub use io::{read_dataset, read_metrics, write_dataset, write_events, write_metrics, STREAMS_FILE, TEST_FILE};
pub use run::{run_dataset, run_scenario, LogEvent, ScenarioOutput};

/// Seed for one component of a run, derived from the master seed, a
/// component tag and an index (usually the device id). Stable across
/// platforms and releases.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then three splitmix64 rounds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = splitmix(master ^ h);
    s = splitmix(s ^ index);
    splitmix(s)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests;
