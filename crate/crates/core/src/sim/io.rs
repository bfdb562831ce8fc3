use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::data::{Dataset, DeviceStream, TestExample};
use super::run::LogEvent;
use crate::error::{Error, Result};
use crate::metrics::{ClassificationMetrics, MetricsRecord, Subject};
use crate::types::{ClassId, DeviceId, Instance};

pub const STREAMS_FILE: &str = "streams.csv";
pub const TEST_FILE: &str = "test.csv";

fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["device_id".to_string(), "seq".to_string()];
    h.extend((1..=dim).map(|i| format!("f{i}")));
    h.push("label".into());
    h
}

fn row(device: &str, seq: u64, features: &[f64], label: Option<ClassId>) -> Vec<String> {
    let mut r = vec![device.to_string(), seq.to_string()];
    // Display for f64 is the shortest exact round trip.
    r.extend(features.iter().map(|v| v.to_string()));
    r.push(label.map_or(String::new(), |c| c.0.to_string()));
    r
}

/// Writes `streams.csv` and `test.csv` into `dir`. Test rows carry an empty
/// device id and their row index as `seq`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(STREAMS_FILE))?;
    w.write_record(header(data.dim))?;
    for s in &data.streams {
        let id = s.device.to_string();
        for inst in &s.instances {
            w.write_record(row(&id, inst.seq, &inst.features, inst.label))?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(TEST_FILE))?;
    w.write_record(header(data.dim))?;
    for (i, ex) in data.test.iter().enumerate() {
        w.write_record(row("", i as u64, &ex.features, Some(ex.label)))?;
    }
    w.flush()?;
    Ok(())
}

struct Row {
    device: Option<u32>,
    seq: u64,
    features: Vec<f64>,
    label: Option<ClassId>,
}

fn read_rows(path: &Path, classes: usize) -> Result<(usize, Vec<Row>)> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    let dim = h
        .len()
        .checked_sub(3)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Data(format!("{}: expected header device_id,seq,f1..fd,label", path.display())))?;
    if h.iter().collect::<Vec<_>>() != header(dim) {
        return Err(Error::Data(format!("{}: expected header device_id,seq,f1..fd,label", path.display())));
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        // Line 1 is the header.
        let bad = |what: &str| Error::Data(format!("{}: line {}: bad {what}", path.display(), n + 2));
        let device = match &rec[0] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("device_id"))?),
        };
        let seq = rec[1].parse().map_err(|_| bad("seq"))?;
        let features = (0..dim)
            .map(|j| rec[2 + j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        let label = match &rec[2 + dim] {
            "" => None,
            s => Some(ClassId(s.parse().ok().filter(|&c| c < classes).ok_or_else(|| bad("label"))?)),
        };
        rows.push(Row { device, seq, features, label });
    }
    Ok((dim, rows))
}

/// Reads a directory written by [`write_dataset`]. Devices are numbered
/// `0..=max id`; ids without rows get empty streams.
pub fn read_dataset(dir: &Path, classes: usize) -> Result<Dataset> {
    let (dim, rows) = read_rows(&dir.join(STREAMS_FILE), classes)?;
    let mut by_device: BTreeMap<u32, Vec<Instance>> = BTreeMap::new();
    for r in rows {
        let d = r.device.ok_or_else(|| Error::Data("stream row without device_id".into()))?;
        let v = by_device.entry(d).or_default();
        if v.last().is_some_and(|last| last.seq >= r.seq) {
            return Err(Error::Data(format!(
                "device {d}: seq must increase, found {} after {}",
                r.seq,
                v.last().unwrap().seq
            )));
        }
        v.push(Instance::new(DeviceId(d), r.seq, r.features, r.label));
    }
    let n = by_device.keys().next_back().map_or(0, |&d| d + 1);
    let streams = (0..n)
        .map(|d| DeviceStream { device: DeviceId(d), instances: by_device.remove(&d).unwrap_or_default() })
        .collect();
    let (test_dim, rows) = read_rows(&dir.join(TEST_FILE), classes)?;
    if test_dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: test_dim });
    }
    let test = rows
        .into_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| Error::Data("test row without label".into()))?;
            Ok(TestExample { features: r.features, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { dim, classes, streams, test })
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "subject", "balanced_accuracy", "sensitivity", "specificity"])?;
    for r in records {
        let m = r.metrics;
        w.write_record([
            r.iteration.to_string(),
            r.subject.to_string(),
            m.balanced_accuracy.to_string(),
            m.sensitivity.to_string(),
            m.specificity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| Error::Data(format!("bad number {:?}", &rec[i])));
        let subject = match &rec[1] {
            "global" => Subject::Global,
            s => Subject::Device(DeviceId(s.parse().map_err(|_| Error::Data(format!("bad subject {s:?}")))?)),
        };
        out.push(MetricsRecord {
            iteration: rec[0].parse().map_err(|_| Error::Data(format!("bad iteration {:?}", &rec[0])))?,
            subject,
            metrics: ClassificationMetrics { balanced_accuracy: num(2)?, sensitivity: num(3)?, specificity: num(4)? },
        });
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[LogEvent]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "iteration,device,event_type,detail")?;
    for e in events {
        writeln!(f, "{e}")?;
    }
    f.flush()?;
    Ok(())
}
