use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

const SMALL: &str = r#"
iterations = 1200
eval_interval = 400
device_count = 3

[data]
dim = 3
test_size = 300

[local]
delta = 30

[server]
max_members = 3
"#;

fn fedcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedcon")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = fedcon(&["run", "--config", s(&cfg), "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["metrics.csv", "events.log", "manifest"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, std::fs::read(b.join("metrics.csv")).unwrap());
    assert!(String::from_utf8_lossy(&metrics).starts_with("iteration,subject,balanced_accuracy"));
    let manifest = std::fs::read_to_string(a.join("manifest")).unwrap();
    assert!(manifest.contains("# seed: 7") && manifest.contains("seed = 7"));

    // The manifest reproduces the run on its own.
    let c = dir.path().join("c");
    let o = fedcon(&["run", "--config", s(&a.join("manifest")), "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metrics, std::fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn gen_then_run_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", &format!("{SMALL}\n[[drift]]\nat = 600\n"));
    let data = dir.path().join("data");
    let o = fedcon(&["gen", "--config", s(&cfg), "--seed", "3", "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let streams = std::fs::read_to_string(data.join("streams.csv")).unwrap();
    assert_eq!(streams.lines().count(), 1 + 3 * 1200);
    assert!(streams.starts_with("device_id,seq,f1,f2,f3,label"));

    let (direct, via) = (dir.path().join("direct"), dir.path().join("via"));
    let o = fedcon(&["run", "--config", s(&cfg), "--seed", "3", "--out", s(&direct)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fedcon(&["run", "--config", s(&cfg), "--seed", "3", "--out", s(&via), "--data", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(direct.join("metrics.csv")).unwrap(), std::fs::read(via.join("metrics.csv")).unwrap());
}

#[test]
fn half_labeled_streams() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "half.toml",
        &SMALL.replace("device_count = 3", "").replace("[data]", "[[devices]]\nlabeled_fraction = 0.5\n[[devices]]\nlabeled_fraction = 0.5\n[[devices]]\nlabeled_fraction = 0.5\n\n[data]"),
    );
    let out = dir.path().join("data");
    let o = fedcon(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("streams.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let empty = rows.iter().filter(|r| r.ends_with(',')).count() as f64;
    let n = rows.len() as f64;
    // Four binomial standard deviations.
    assert!((empty - n / 2.0).abs() < 4.0 * (n / 4.0).sqrt(), "{empty} of {n}");
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.toml");
    let o = fedcon(&["run", "--config", s(&missing), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));

    let bad = write(dir.path(), "bad.toml", "iterations = 100\n\n[local]\ndelat = 5\n");
    let o = fedcon(&["run", "--config", s(&bad), "--out", s(&out)]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("bad.toml") && e.contains("line 4") && e.contains("delat"), "{e}");

    let invalid = write(dir.path(), "invalid.toml", "device_count = 2\n[server]\nmax_members = 3\n");
    let o = fedcon(&["gen", "--config", s(&invalid), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("invalid.toml"), "{}", stderr(&o));
}

#[test]
fn drift_replay_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (pre, post, flat) = (Beta::new(9.0, 1.0).unwrap(), Beta::new(3.0, 3.0).unwrap(), Beta::new(8.0, 2.0).unwrap());
    let shift: Vec<String> = (0..400)
        .map(|i| if i < 200 { pre.sample(&mut rng) } else { post.sample(&mut rng) })
        .map(|v: f64| v.clamp(1e-6, 1.0 - 1e-6).to_string())
        .collect();
    let shift = write(dir.path(), "shift.txt", &shift.join("\n"));
    let o = fedcon(&["drift-replay", s(&shift)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{text}");
    let index: usize = rows[0].split(',').next().unwrap().parse().unwrap();
    assert!((180..=220).contains(&index), "{index}");

    let stationary: Vec<String> =
        (0..1000).map(|_| Distribution::<f64>::sample(&flat, &mut rng).clamp(1e-6, 1.0 - 1e-6).to_string()).collect();
    let stationary = write(dir.path(), "flat.txt", &stationary.join("\n"));
    let o = fedcon(&["drift-replay", s(&stationary)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);

    let short = write(dir.path(), "short.txt", "0.9\n0.1\n");
    let o = fedcon(&["drift-replay", s(&short)]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "index,change_point,score");

    let bad = write(dir.path(), "bad.txt", "0.9\n0.8\nhello\n");
    let o = fedcon(&["drift-replay", s(&bad)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.txt:3"), "{}", stderr(&o));
}
