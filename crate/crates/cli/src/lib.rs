//! Subcommand bodies for the `fedcon` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::rngs::StdRng;
use rand::SeedableRng;

use fedcon_core::drift::{DetectorConfig, DriftDetector};
use fedcon_core::sim::{
    read_dataset, run_dataset, run_scenario, scenario_dataset, write_dataset, write_events, write_metrics,
    ScenarioConfig, ScenarioOutput,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const MANIFEST_FILE: &str = "manifest";

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eval_interval: Option<u64>,
    pub parallel: bool,
}

/// Reads, overrides, validates and resolves a scenario config. Errors name
/// the file; parse errors carry the line.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config = ScenarioConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(n) = overrides.eval_interval {
        config.eval_interval = n;
    }
    config.parallel |= overrides.parallel;
    config.resolved().with_context(|| format!("invalid config {}", path.display()))
}

/// Origin of the run as TOML comments, then the resolved config, so
/// the file is itself a valid `--config`.
pub fn manifest_text(config_path: &Path, out: &Path, config: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# fedcon run manifest");
    let _ = writeln!(s, "# config: {}", config_path.display());
    let _ = writeln!(s, "# seed: {}", config.seed);
    let _ = writeln!(s, "# out: {}", out.display());
    s.push('\n');
    s.push_str(&config.to_toml());
    s
}

fn write_manifest(config_path: &Path, out: &Path, config: &ScenarioConfig) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, manifest_text(config_path, out, config))
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn cmd_run(config_path: &Path, overrides: &Overrides, out: &Path, data: Option<&Path>) -> Result<ScenarioOutput> {
    let config = load_config(config_path, overrides)?;
    write_manifest(config_path, out, &config)?;
    let output = match data {
        Some(dir) => {
            let dataset = read_dataset(dir, config.local.classes)
                .with_context(|| format!("cannot load dataset from {}", dir.display()))?;
            run_dataset(&config, &dataset)?
        }
        None => run_scenario(&config)?,
    };
    write_metrics(&out.join(METRICS_FILE), &output.metrics)?;
    write_events(&out.join(EVENTS_FILE), &output.events)?;
    Ok(output)
}

/// Materializes the streams exactly as a run would see them, with drift
/// and label inversion already applied.
pub fn cmd_gen(config_path: &Path, overrides: &Overrides, out: &Path) -> Result<PathBuf> {
    let config = load_config(config_path, overrides)?;
    write_manifest(config_path, out, &config)?;
    let data = scenario_dataset(&config)?;
    write_dataset(out, &data)?;
    Ok(out.to_path_buf())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fire {
    /// Position in the input (0-based) of the value that triggered it.
    pub index: usize,
    /// Split reported by the scan, counted from the start of the input.
    pub change_point: Option<usize>,
    pub score: f64,
}

/// One confidence per line; blank lines are skipped.
pub fn parse_confidences(text: &str, source: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = match line.parse() {
            Ok(v) => v,
            Err(_) => bail!("{source}:{}: not a number: {line:?}", i + 1),
        };
        if !(v > 0.0 && v < 1.0) {
            bail!("{source}:{}: confidence {v} is outside (0, 1)", i + 1);
        }
        out.push(v);
    }
    Ok(out)
}

/// Feeds the values through an ungated detector. After a fire the window
/// is cleared, as a device does once it retrains.
pub fn drift_replay(values: &[f64], delta: usize, alpha: f64) -> Result<Vec<Fire>> {
    if delta == 0 || !(alpha > 0.0 && alpha < 1.0) {
        bail!("need delta >= 1 and alpha in (0, 1)");
    }
    let mut detector = DriftDetector::new(DetectorConfig { delta, alpha, gating: false });
    let mut rng = StdRng::seed_from_u64(0);
    let mut fires = Vec::new();
    let mut window_start = 0;
    for (index, &v) in values.iter().enumerate() {
        let before = detector.window().len();
        let d = detector.observe((), v, &mut rng, true).decision;
        if detector.window().len() == before {
            window_start += 1;
        }
        if d.fired {
            fires.push(Fire {
                index,
                change_point: d.change_point.map(|k| window_start + k),
                score: d.score.unwrap_or(f64::NAN),
            });
            detector.window_mut().clear();
            window_start = index + 1;
        }
    }
    Ok(fires)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reports_the_line() {
        assert_eq!(parse_confidences("0.5\n\n0.25\n", "f").unwrap(), vec![0.5, 0.25]);
        let e = parse_confidences("0.5\nabc\n", "f").unwrap_err().to_string();
        assert!(e.starts_with("f:2:"), "{e}");
        let e = parse_confidences("0.5\n0.7\n1.0\n", "f").unwrap_err().to_string();
        assert!(e.starts_with("f:3:"), "{e}");
    }

    #[test]
    fn replay_edges() {
        assert!(drift_replay(&[0.9; 150], 100, 0.05).unwrap().is_empty());
        assert!(drift_replay(&[0.9; 10], 0, 0.05).is_err());
        // A sharp drop after a stable stretch.
        let mut xs: Vec<f64> = (0..300).map(|i| 0.95 - 0.02 * ((i % 5) as f64)).collect();
        xs.extend((0..100).map(|i| 0.35 + 0.05 * ((i % 5) as f64)));
        let fires = drift_replay(&xs, 50, 0.05).unwrap();
        assert!(!fires.is_empty());
        let first = fires[0];
        assert!((300..320).contains(&first.index), "{first:?}");
        assert!(first.change_point.unwrap() <= first.index);
    }

    #[test]
    fn manifest_is_a_config() {
        let c = ScenarioConfig { device_count: Some(5), seed: 9, ..Default::default() }.resolved().unwrap();
        let text = manifest_text(Path::new("a.toml"), Path::new("out"), &c);
        assert!(text.contains("# seed: 9"));
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), c);
    }
}
