use super::*;
use crate::error::Error;
use crate::metrics::Subject;
use crate::types::{ClassId, DeviceId};

fn small() -> ScenarioConfig {
    ScenarioConfig::from_toml(
        r#"
        seed = 3
        iterations = 1500
        eval_interval = 500
        device_count = 3
        [data]
        dim = 3
        test_size = 400
        offset_scale = 0.2
        [local]
        delta = 30
        [server]
        max_members = 3
        "#,
    )
    .unwrap()
}

#[test]
fn seed_derivation_separates_tags_and_indices() {
    let a = derive_seed(7, "stream", 0);
    assert_eq!(a, derive_seed(7, "stream", 0));
    assert_ne!(a, derive_seed(7, "stream", 1));
    assert_ne!(a, derive_seed(7, "context", 0));
    assert_ne!(a, derive_seed(8, "stream", 0));
}

#[test]
fn generation_is_deterministic_and_per_device() {
    let c = small();
    let a = synth_generate(&c, 11).unwrap();
    assert_eq!(a, synth_generate(&c, 11).unwrap());
    assert_ne!(a, synth_generate(&c, 12).unwrap());
    assert_eq!(a.streams.len(), 3);
    assert_ne!(a.streams[0].instances[0].features, a.streams[1].instances[0].features);
    for s in &a.streams {
        assert_eq!(s.instances.len(), 1500);
        assert!(s.instances.iter().all(|i| i.device == s.device && i.dim() == 3));
        assert!(s.instances.windows(2).all(|w| w[0].seq < w[1].seq));
    }
    assert_eq!(a.test.len(), 400);
}

#[test]
fn labeled_fraction_extremes() {
    let mut c = small();
    c.device_count = None;
    c.devices = vec![
        DeviceSpec { labeled_fraction: 1.0, ..Default::default() },
        DeviceSpec { labeled_fraction: 0.0, ..Default::default() },
        DeviceSpec { labeled_fraction: 0.25, ..Default::default() },
    ];
    let d = synth_generate(&c, 1).unwrap();
    assert!(d.streams[0].instances.iter().all(|i| i.label.is_some()));
    assert!(d.streams[1].instances.iter().all(|i| i.label.is_none()));
    let f = d.streams[2].instances.iter().filter(|i| i.label.is_some()).count() as f64 / 1500.0;
    assert!((f - 0.25).abs() < 0.05, "{f}");
}

#[test]
fn activity_windows_drop_instances() {
    let mut c = small();
    c.device_count = None;
    c.devices = vec![
        DeviceSpec { active: vec![[101, 200], [1001, 1100]], ..Default::default() },
        DeviceSpec::default(),
        DeviceSpec::default(),
    ];
    let d = synth_generate(&c, 1).unwrap();
    let seqs: Vec<u64> = d.streams[0].instances.iter().map(|i| i.seq).collect();
    assert_eq!(seqs.len(), 200);
    assert_eq!((seqs[0], seqs[99], seqs[100], seqs[199]), (101, 200, 1001, 1100));
}

#[test]
fn iid_devices_share_the_class_means() {
    let mut c = small();
    c.data.offset_scale = 0.0;
    c.data.separation = 6.0;
    c.iterations = 6000;
    let d = synth_generate(&c, 5).unwrap();
    let mean = |s: &DeviceStream, y: usize| {
        let xs: Vec<f64> = s.instances.iter().filter(|i| i.label == Some(ClassId(y))).map(|i| i.features[0]).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    for s in &d.streams {
        assert!((mean(s, 0) + 3.0 / 3f64.sqrt()).abs() < 0.1);
        assert!((mean(s, 1) - 3.0 / 3f64.sqrt()).abs() < 0.1);
    }
}

#[test]
fn explicit_offsets_shift_features() {
    let mut c = small();
    c.device_count = None;
    c.devices = vec![
        DeviceSpec { offset: Some(vec![0.0; 3]), ..Default::default() },
        DeviceSpec { offset: Some(vec![10.0, 0.0, 0.0]), ..Default::default() },
        DeviceSpec::default(),
    ];
    let d = synth_generate(&c, 2).unwrap();
    let m = |k: usize| d.streams[k].instances.iter().map(|i| i.features[0]).sum::<f64>() / 1500.0;
    assert!((m(1) - m(0) - 10.0).abs() < 0.3);
}

#[test]
fn poisoning_rules() {
    let c = small();
    let clean = synth_generate(&c, 4).unwrap();

    let mut d = clean.clone();
    inject_label_inversion(&mut d, &[]).unwrap();
    assert_eq!(d, clean);

    let mut all = clean.clone();
    inject_label_inversion(&mut all, &[0, 1, 2]).unwrap();
    let mut swapped = clean.clone();
    inject_global_drift(&mut swapped, &[ScheduledDrift { at: 0, kind: DriftKind::SwapClasses }]);
    assert_eq!(all, swapped);

    let mut one = clean.clone();
    inject_label_inversion(&mut one, &[1]).unwrap();
    assert_eq!(one.streams[0], clean.streams[0]);
    for (a, b) in one.streams[1].instances.iter().zip(&clean.streams[1].instances) {
        assert_eq!(a.features, b.features);
        assert_eq!(a.label, b.label.map(|c| ClassId(1 - c.0)));
    }
}

#[test]
fn drift_schedule_edges() {
    let c = small();
    let clean = synth_generate(&c, 4).unwrap();
    let late = [ScheduledDrift { at: 1501, kind: DriftKind::SwapClasses }];
    let mut d = clean.clone();
    inject_global_drift(&mut d, &late);
    assert_eq!(d, clean);

    let mid = [ScheduledDrift { at: 700, kind: DriftKind::SwapClasses }];
    let mut d = clean.clone();
    inject_global_drift(&mut d, &mid);
    for (a, b) in d.streams[0].instances.iter().zip(&clean.streams[0].instances) {
        let flipped = b.label.map(|c| ClassId(1 - c.0));
        assert_eq!(a.label, if a.seq >= 700 { flipped } else { b.label });
    }
    let twice = [mid[0], ScheduledDrift { at: 900, kind: DriftKind::SwapClasses }];
    assert!(!concept_swapped(&twice, 699));
    assert!(concept_swapped(&twice, 700));
    assert!(!concept_swapped(&twice, 900));
}

#[test]
fn bayes_accuracy_of_the_default_task() {
    let spec = DataSpec::default();
    let b = bayes_balanced_accuracy(&spec).unwrap();
    assert!((b - 0.95).abs() < 0.001, "{b}");
    let resolved = small().resolved().unwrap();
    assert!(bayes_balanced_accuracy(&resolved.data).is_some());
    let mut custom = spec.clone();
    custom.classes = Some(vec![
        ClassGenerator { components: vec![Component { weight: 1.0, mean: vec![0.0; 8], std: vec![1.0; 8] }] },
        ClassGenerator { components: vec![Component { weight: 1.0, mean: vec![1.0; 8], std: vec![2.0; 8] }] },
    ]);
    assert_eq!(bayes_balanced_accuracy(&custom), None);
}

#[test]
fn config_errors() {
    let err = ScenarioConfig::from_toml("iterations = 10\nbogus = 1\n").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("bogus") && m.contains("line 2")), "{err}");
    assert!(ScenarioConfig::from_toml("[data]\ndim = \"x\"\n").is_err());

    let check = |f: &dyn Fn(&mut ScenarioConfig)| {
        let mut c = small();
        f(&mut c);
        c.validate().unwrap_err()
    };
    check(&|c| c.device_count = Some(0));
    check(&|c| c.iterations = 0);
    check(&|c| c.data.dim = 0);
    check(&|c| c.poison = vec![3]);
    check(&|c| c.positive_class = 2);
    check(&|c| c.server.max_members = 4);
    check(&|c| c.local.gamma = 1.0);
    check(&|c| c.data.offset_scale = -1.0);
    check(&|c| {
        c.device_count = None;
        c.devices = vec![DeviceSpec { labeled_fraction: 1.5, ..Default::default() }; 3];
    });
}

#[test]
fn toml_round_trip() {
    let c = small().resolved().unwrap();
    let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn run_is_deterministic_and_respects_invariants() {
    let c = small();
    let a = run_scenario(&c).unwrap();
    let b = run_scenario(&c).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.events, b.events);
    assert!(a.global_at(1500).is_some());
    assert!(a.metrics.iter().any(|r| r.subject == Subject::Device(DeviceId(0))));

    let local = &a.config.local;
    for node in &a.nodes {
        assert!(node.ensemble().len() <= local.max_models);
        assert!(node.window().len() <= 20 * local.delta);
        for (item, _) in node.window().iter() {
            assert_eq!(item.instance.device, node.device());
            if let Some(p) = item.pseudo_confidence {
                assert!(p >= local.gamma);
                assert!(item.instance.label.is_some());
            }
        }
    }
    assert!(a.server.ensemble().len() <= a.config.server.max_members);
}

#[test]
fn csv_round_trip_reproduces_the_run() {
    let c = small().resolved().unwrap();
    let data = scenario_dataset(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &data).unwrap();
    let back = read_dataset(dir.path(), 2).unwrap();
    assert_eq!(back, data);
    let a = run_dataset(&c, &data).unwrap();
    let b = run_dataset(&c, &back).unwrap();
    assert_eq!(a.metrics, b.metrics);

    let path = dir.path().join("metrics.csv");
    write_metrics(&path, &a.metrics).unwrap();
    assert_eq!(read_metrics(&path).unwrap(), a.metrics);
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(STREAMS_FILE), "device_id,seq,f1,label\n0,1,0.5,1\n0,2,abc,0\n").unwrap();
    std::fs::write(dir.path().join(TEST_FILE), "device_id,seq,f1,label\n,0,0.5,1\n").unwrap();
    let err = read_dataset(dir.path(), 2).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
}

#[test]
fn single_device_federation() {
    let mut c = small();
    c.device_count = Some(1);
    c.server.max_members = 1;
    let out = run_scenario(&c).unwrap();
    assert_eq!(out.global_members(), vec![DeviceId(0)]);
}

#[test]
fn no_global_model_is_an_error() {
    let mut c = small();
    c.iterations = 20;
    let r = run_scenario(&c).map(|o| o.global_members());
    assert!(matches!(r, Err(Error::NoGlobalModel(20))), "{r:?}");
}

#[test]
fn parallel_mode_stays_close() {
    let c = small();
    let mut p = c.clone();
    p.parallel = true;
    let a = run_scenario(&c).unwrap();
    let b = run_scenario(&p).unwrap();
    let (ga, gb) = (a.global_at(1500).unwrap(), b.global_at(1500).unwrap());
    assert!((ga - gb).abs() < 0.1, "{ga} vs {gb}");
    assert_eq!(b.metrics, run_scenario(&p).unwrap().metrics);
}
