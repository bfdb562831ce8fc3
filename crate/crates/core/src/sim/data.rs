use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::config::{ClassGenerator, DataSpec, ScenarioConfig, ScheduledDrift};
use super::derive_seed;
use crate::error::{Error, Result};
use crate::types::{ClassId, DeviceId, Instance};

/// One device's stream; `seq` of every instance is its iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStream {
    pub device: DeviceId,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestExample {
    pub features: Vec<f64>,
    pub label: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    pub streams: Vec<DeviceStream>,
    /// Drawn without device offsets, under the original class meaning.
    pub test: Vec<TestExample>,
}

impl Dataset {
    pub fn labeled(&self) -> impl Iterator<Item = &Instance> {
        self.streams.iter().flat_map(|s| s.instances.iter()).filter(|i| i.is_labeled())
    }
}

struct Sampler {
    classes: Vec<(WeightedIndex<f64>, ClassGenerator)>,
}

impl Sampler {
    fn new(spec: &DataSpec) -> Result<Self> {
        let classes = spec
            .generators()
            .into_iter()
            .map(|g| {
                let w = WeightedIndex::new(g.components.iter().map(|c| c.weight))
                    .map_err(|e| Error::Config(format!("mixture weights: {e}")))?;
                Ok((w, g))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { classes })
    }

    fn draw<R: Rng>(&self, class: usize, rng: &mut R) -> Vec<f64> {
        let (pick, g) = &self.classes[class];
        let comp = &g.components[pick.sample(rng)];
        comp.mean
            .iter()
            .zip(&comp.std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect()
    }
}

/// Per-device shift process: piecewise constant, redrawn at exponential
/// inter-arrival times.
struct Context {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    scale: f64,
    next: f64,
    shift: Vec<f64>,
}

impl Context {
    fn new(spec: &DataSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gap, scale) = match &spec.local_drift {
            Some(ld) if ld.scale > 0.0 => (Some(Exp::new(1.0 / ld.mean_interval).expect("positive rate")), ld.scale),
            _ => (None, 0.0),
        };
        let next = gap.map_or(f64::INFINITY, |g| g.sample(&mut rng));
        Self { rng, gap, scale, next, shift: vec![0.0; spec.dim] }
    }

    fn at(&mut self, t: u64) -> &[f64] {
        if let Some(gap) = self.gap {
            while self.next <= t as f64 {
                for s in &mut self.shift {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *s = self.scale * z;
                }
                self.next += gap.sample(&mut self.rng);
            }
        }
        &self.shift
    }
}

/// Synthetic per-device streams and a held-out test set, all derived from
/// `seed`. Labels are hidden per instance with probability
/// `1 - labeled_fraction`, from a stream independent of the features.
pub fn synth_generate(config: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut config = config.clone();
    config.resolve();
    let spec = &config.data;
    let sampler = Sampler::new(spec)?;
    let classes = sampler.classes.len();
    let uniform = vec![1.0; classes];

    let mut streams = Vec::with_capacity(config.devices.len());
    for (i, dev) in config.devices.iter().enumerate() {
        let index = i as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "stream", index));
        let mut mask = ChaCha8Rng::seed_from_u64(derive_seed(seed, "label_mask", index));
        let mut context = Context::new(spec, derive_seed(seed, "context", index));
        let prior = WeightedIndex::new(dev.class_prior.as_ref().unwrap_or(&uniform))
            .map_err(|e| Error::Config(format!("device {i} class_prior: {e}")))?;
        let offset: Vec<f64> = match &dev.offset {
            Some(o) => o.clone(),
            None => {
                let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, "offset", index));
                (0..spec.dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        spec.offset_scale * z
                    })
                    .collect()
            }
        };
        let device = DeviceId(i as u32);
        let mut instances = Vec::new();
        for t in 1..=config.iterations {
            if !dev.is_active(t) {
                continue;
            }
            let y = prior.sample(&mut rng);
            let mut x = sampler.draw(y, &mut rng);
            for ((v, s), o) in x.iter_mut().zip(context.at(t)).zip(&offset) {
                *v += s + o;
            }
            let label = mask.random_bool(dev.labeled_fraction).then_some(ClassId(y));
            instances.push(Instance::new(device, t, x, label));
        }
        streams.push(DeviceStream { device, instances });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "test", 0));
    let test = (0..spec.test_size)
        .map(|_| {
            let y = rng.random_range(0..classes);
            TestExample { features: sampler.draw(y, &mut rng), label: ClassId(y) }
        })
        .collect();
    Ok(Dataset { dim: spec.dim, classes, streams, test })
}

/// Whether the class meaning at iteration `t` is the mirror of the
/// original one.
pub fn concept_swapped(schedule: &[ScheduledDrift], t: u64) -> bool {
    schedule.iter().filter(|d| d.at <= t).count() % 2 == 1
}

fn mirror(c: ClassId, classes: usize) -> ClassId {
    ClassId(classes - 1 - c.0)
}

/// Applies the drift schedule to every labeled stream instance: while the
/// concept is swapped, class `c` stands for what class `C-1-c` used to be.
pub fn inject_global_drift(data: &mut Dataset, schedule: &[ScheduledDrift]) {
    let classes = data.classes;
    for inst in data.streams.iter_mut().flat_map(|s| s.instances.iter_mut()) {
        if concept_swapped(schedule, inst.seq) {
            inst.label = inst.label.map(|c| mirror(c, classes));
        }
    }
}

/// Flips every label on the listed devices. Binary tasks only.
pub fn inject_label_inversion(data: &mut Dataset, poison: &[u32]) -> Result<()> {
    if poison.is_empty() {
        return Ok(());
    }
    if data.classes != 2 {
        return Err(Error::Config(format!("label inversion needs 2 classes, got {}", data.classes)));
    }
    for s in data.streams.iter_mut().filter(|s| poison.contains(&s.device.0)) {
        for inst in &mut s.instances {
            inst.label = inst.label.map(|c| mirror(c, 2));
        }
    }
    Ok(())
}

/// Streams exactly as the scenario feeds them: generated, then drifted,
/// then poisoned.
pub fn scenario_dataset(config: &ScenarioConfig) -> Result<Dataset> {
    let mut data = synth_generate(config, config.seed)?;
    inject_global_drift(&mut data, &config.drift);
    inject_label_inversion(&mut data, &config.poison)?;
    Ok(data)
}

/// Best achievable balanced accuracy for the default pair of unit-variance
/// Gaussians, `Φ(separation / 2)`. `None` for custom mixtures.
pub fn bayes_balanced_accuracy(spec: &DataSpec) -> Option<f64> {
    let default = DataSpec { classes: None, ..spec.clone() }.generators();
    if spec.classes.as_ref().is_some_and(|c| *c != default) {
        return None;
    }
    Some(0.5 * libm::erfc(-spec.separation / 2.0 / std::f64::consts::SQRT_2))
}
