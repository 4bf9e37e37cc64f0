use std::fs;

use qhid_core::runner::{self, Manifest, RunError, RunOptions, RunSummary, SweepSpec};
use qhid_core::scenario::builtin;
use sha2::{Digest, Sha256};

fn short(name: &str, horizon: f64) -> qhid_core::scenario::Scenario {
    let mut s = builtin(name).unwrap();
    s.integration.horizon = horizon;
    s
}

#[test]
fn run_writes_csv_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = short("fig1-2level", 10.0);
    let rep = runner::run(&s, dir.path(), &RunOptions::default()).unwrap();

    let csv = fs::read_to_string(dir.path().join(runner::TRAJECTORY_FILE)).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,y_1,y_2,yhat_1,yhat_2,thetahat_1_2,V,e,purity_hat,trace_drift"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 10);
    // 17 significant digits
    assert_eq!(
        first[1]
            .split('e')
            .next()
            .unwrap()
            .replace(['.', '-'], "")
            .len(),
        17
    );
    assert_eq!(csv.lines().count(), rep.result.trajectory.len() + 1);

    let summary: RunSummary =
        toml::from_str(&fs::read_to_string(dir.path().join(runner::SUMMARY_FILE)).unwrap())
            .unwrap();
    assert_eq!(summary.run.status, "complete");
    assert_eq!(summary.config, s);
    assert!(summary.identifiability.a2_ok);

    let manifest: Manifest =
        toml::from_str(&fs::read_to_string(dir.path().join(runner::MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(manifest.status, "complete");
    for f in &manifest.files {
        let bytes = fs::read(dir.path().join(&f.name)).unwrap();
        assert_eq!(f.sha256, hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn blowup_leaves_flagged_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short("fig1-2level", 10.0);
    s.estimator.state_gain = 1e308;
    let err = runner::run(&s, dir.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, RunError::Simulation { .. }));
    assert_eq!(err.exit_code(), 1);
    let manifest: Manifest =
        toml::from_str(&fs::read_to_string(dir.path().join(runner::MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(manifest.status, "partial");
    assert!(manifest.error.unwrap().contains("blowup"));
    assert!(dir.path().join(runner::TRAJECTORY_FILE).exists());
}

#[test]
fn seeds_change_noisy_runs_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let s = short("fig6-noisy-meas", 5.0);
    let read = |sub: &str, seed: Option<u64>| {
        let p = dir.path().join(sub);
        runner::run(
            &s,
            &p,
            &RunOptions {
                seed_override: seed,
                record_stride: None,
            },
        )
        .unwrap();
        fs::read(p.join(runner::TRAJECTORY_FILE)).unwrap()
    };
    let a = read("a", Some(3));
    let b = read("b", Some(3));
    let c = read("c", Some(4));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_rows_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let s = short("fig7-noisy-control", 5.0);
    let spec = SweepSpec {
        parameter: "estimator.state_gain".into(),
        values: vec![
            toml::Value::Float(0.5),
            toml::Value::Integer(1),
            toml::Value::Float(-1.0),
        ],
        replicates: 2,
        parallel: 2,
    };
    let rows = runner::sweep(&s, &spec, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.index, i);
        assert_eq!(r.seed_control, s.seeds.control + r.replicate as u64);
    }
    assert!(rows[..4].iter().all(|r| r.status == "complete"));
    assert!(rows[4..]
        .iter()
        .all(|r| r.status == "invalid" && r.error.contains("state_gain")));
    // replicates differ, equal replicate index gives equal noise
    assert_ne!(rows[0].max_final_error, rows[1].max_final_error);

    let table = fs::read_to_string(dir.path().join(runner::SWEEP_FILE)).unwrap();
    assert!(table.starts_with("index,value,replicate,seed_measurement,seed_control,status"));
    assert_eq!(table.lines().count(), 7);

    let again =
        runner::sweep(&s, &spec, &dir.path().join("again"), &RunOptions::default()).unwrap();
    assert_eq!(
        table,
        fs::read_to_string(dir.path().join("again").join(runner::SWEEP_FILE)).unwrap()
    );
    assert_eq!(again.len(), rows.len());
}

#[test]
fn sweep_rejects_empty_axis_and_bad_keys() {
    let dir = tempfile::tempdir().unwrap();
    let s = short("fig1-2level", 1.0);
    let mut spec = SweepSpec {
        parameter: "estimator.state_gain".into(),
        values: vec![],
        replicates: 1,
        parallel: 1,
    };
    let e = runner::sweep(&s, &spec, dir.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(e, RunError::EmptyAxis(_)));
    assert_eq!(e.exit_code(), 2);

    spec.values = vec![toml::Value::Float(1.0)];
    spec.parameter = "estimator.stat_gain".into();
    assert!(runner::sweep(&s, &spec, dir.path(), &RunOptions::default()).is_err());
}
