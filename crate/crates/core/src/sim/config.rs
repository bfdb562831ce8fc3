use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local_node::LocalConfig;
use crate::server::ServerConfig;

/// One diagonal Gaussian of a class mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    #[serde(default = "one")]
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-feature standard deviations.
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassGenerator {
    pub components: Vec<Component>,
}

/// Per-device feature shifts redrawn at exponentially distributed times,
/// so each device sees its own piecewise-stationary stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalDriftSpec {
    /// Mean number of iterations between shifts.
    pub mean_interval: f64,
    /// Standard deviation of each coordinate of the shift.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Distance between the two default class means. Ignored when
    /// `classes` is given.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Explicit class-conditional mixtures, one per class.
    #[serde(default)]
    pub classes: Option<Vec<ClassGenerator>>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub local_drift: Option<LocalDriftSpec>,
    /// Standard deviation of each coordinate of the random per-device
    /// offset given to devices without an explicit `offset`.
    #[serde(default)]
    pub offset_scale: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            separation: default_separation(),
            classes: None,
            test_size: default_test_size(),
            local_drift: None,
            offset_scale: 0.0,
        }
    }
}

impl DataSpec {
    /// Class generators, building the default pair of unit Gaussians at
    /// `±separation/2` along the diagonal when none are configured.
    pub fn generators(&self) -> Vec<ClassGenerator> {
        if let Some(c) = &self.classes {
            return c.clone();
        }
        let step = self.separation / 2.0 / (self.dim as f64).sqrt();
        [-step, step]
            .iter()
            .map(|&s| ClassGenerator {
                components: vec![Component { weight: 1.0, mean: vec![s; self.dim], std: vec![1.0; self.dim] }],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    #[serde(default = "one")]
    pub labeled_fraction: f64,
    /// Class probabilities; uniform when absent.
    #[serde(default)]
    pub class_prior: Option<Vec<f64>>,
    /// Fixed feature shift of this device (non-IID bias).
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    /// Inclusive iteration ranges in which the device records data; always
    /// when empty.
    #[serde(default)]
    pub active: Vec<[u64; 2]>,
    /// Inclusive iteration ranges in which the device ignores evaluation
    /// requests.
    #[serde(default)]
    pub offline: Vec<[u64; 2]>,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self { labeled_fraction: 1.0, class_prior: None, offset: None, active: Vec::new(), offline: Vec::new() }
    }
}

fn in_ranges(ranges: &[[u64; 2]], t: u64) -> bool {
    ranges.iter().any(|r| r[0] <= t && t <= r[1])
}

impl DeviceSpec {
    pub fn is_active(&self, t: u64) -> bool {
        self.active.is_empty() || in_ranges(&self.active, t)
    }

    pub fn is_offline(&self, t: u64) -> bool {
        in_ranges(&self.offline, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// Class `c` is drawn from the generator of class `C-1-c` (binary:
    /// the two classes trade meaning).
    SwapClasses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledDrift {
    /// First affected iteration.
    pub at: u64,
    #[serde(default = "default_drift_kind")]
    pub kind: DriftKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "one_usize")]
    pub positive_class: usize,
    #[serde(default)]
    pub parallel: bool,
    /// Number of devices when `devices` is left empty; each then gets the
    /// default spec.
    #[serde(default)]
    pub device_count: Option<usize>,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub local: LocalConfig,
    #[serde(default)]
    pub server: ServerConfig,
    /// Devices whose labels are all inverted.
    #[serde(default)]
    pub poison: Vec<u32>,
    #[serde(default)]
    pub drift: Vec<ScheduledDrift>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_dim() -> usize {
    8
}
fn default_separation() -> f64 {
    3.29
}
fn default_test_size() -> usize {
    2000
}
fn default_iterations() -> u64 {
    10_000
}
fn default_eval_interval() -> u64 {
    250
}
fn default_drift_kind() -> DriftKind {
    DriftKind::SwapClasses
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: default_iterations(),
            eval_interval: default_eval_interval(),
            positive_class: 1,
            parallel: false,
            device_count: None,
            devices: Vec::new(),
            data: DataSpec::default(),
            local: LocalConfig::default(),
            server: ServerConfig::default(),
            poison: Vec::new(),
            drift: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills every defaulted field with its effective value, so the result
    /// documents the run on its own.
    pub fn resolve(&mut self) {
        if self.devices.is_empty() {
            self.devices = vec![DeviceSpec::default(); self.device_count.unwrap_or(1)];
        }
        self.device_count = Some(self.devices.len());
        if self.data.classes.is_none() {
            self.data.classes = Some(self.data.generators());
        }
        self.local.resolve();
        self.local.classes = self.data.classes.as_ref().map_or(2, Vec::len);
        self.server.resolve();
        self.poison.sort_unstable();
        self.poison.dedup();
        self.drift.sort_by_key(|d| d.at);
    }

    pub fn resolved(mut self) -> Result<Self> {
        self.resolve();
        self.validate()?;
        Ok(self)
    }

    pub fn device_total(&self) -> usize {
        if self.devices.is_empty() {
            self.device_count.unwrap_or(1)
        } else {
            self.devices.len()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let n = self.device_total();
        if n == 0 {
            return bad("at least one device is required".into());
        }
        if let Some(c) = self.device_count {
            if !self.devices.is_empty() && c != self.devices.len() {
                return bad(format!("device_count is {c} but {} devices are listed", self.devices.len()));
            }
        }
        if self.iterations == 0 || self.eval_interval == 0 {
            return bad("iterations and eval_interval must be positive".into());
        }
        let d = self.data.dim;
        if d == 0 {
            return bad("data.dim must be positive".into());
        }
        let gens = self.data.generators();
        if gens.len() < 2 {
            return bad("at least two classes are required".into());
        }
        for (c, g) in gens.iter().enumerate() {
            if g.components.is_empty() {
                return bad(format!("class {c} has no mixture components"));
            }
            for comp in &g.components {
                if comp.mean.len() != d || comp.std.len() != d {
                    return bad(format!("class {c}: mean and std need {d} entries"));
                }
                if !(comp.weight > 0.0) || comp.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return bad(format!("class {c}: weights and std must be positive"));
                }
            }
        }
        if let Some(ld) = &self.data.local_drift {
            if !(ld.mean_interval > 0.0) || !(ld.scale >= 0.0) {
                return bad("local_drift needs mean_interval > 0 and scale >= 0".into());
            }
        }
        if !(self.data.offset_scale >= 0.0 && self.data.offset_scale.is_finite()) {
            return bad("data.offset_scale must be nonnegative".into());
        }
        if self.data.test_size == 0 {
            return bad("data.test_size must be positive".into());
        }
        if self.positive_class >= gens.len() {
            return bad(format!("positive_class {} is not a class", self.positive_class));
        }
        for (i, dev) in self.devices.iter().enumerate() {
            if !(0.0..=1.0).contains(&dev.labeled_fraction) {
                return bad(format!("device {i}: labeled_fraction must lie in [0, 1]"));
            }
            if let Some(p) = &dev.class_prior {
                if p.len() != gens.len() || p.iter().any(|v| !(*v >= 0.0)) || !(p.iter().sum::<f64>() > 0.0) {
                    return bad(format!("device {i}: class_prior needs {} nonnegative entries", gens.len()));
                }
            }
            if dev.offset.as_ref().is_some_and(|o| o.len() != d) {
                return bad(format!("device {i}: offset needs {d} entries"));
            }
            if dev.active.iter().chain(&dev.offline).any(|r| r[0] > r[1]) {
                return bad(format!("device {i}: ranges must be [start, end] with start <= end"));
            }
        }
        if let Some(&p) = self.poison.iter().find(|&&p| p as usize >= n) {
            return bad(format!("poisoned device {p} does not exist"));
        }
        if !self.poison.is_empty() && gens.len() != 2 {
            return bad("label inversion needs a binary task".into());
        }
        let mut local = self.local.clone();
        local.classes = gens.len();
        local.validate()?;
        self.server.validate(n)
    }
}
