use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regimecast::gridstore::{write_grid, GriddedField};
use regimecast::models::{ForecastRecord, N_CLASSES, N_LEADS};

const BIN: &str = env!("CARGO_BIN_EXE_regimecast");

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SOURCE_DATE_EPOCH", "1700000000").output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn demo_pipeline_emits_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = demo_config();
    let c = s(&cfg);
    let world = d.join("world");
    let anom = d.join("z500_anom.grd");
    let regimes = d.join("regimes");
    ok(&["--config", c, "synth", s(&world)]);
    ok(&["--config", c, "preprocess", s(&world.join("z500.grd")), s(&anom)]);
    ok(&["--config", c, "eof", s(&anom), s(&d.join("eof.json"))]);
    ok(&["--config", c, "cluster", s(&anom), s(&world.join("reference_patterns.grd")), s(&regimes)]);
    ok(&["--config", c, "windows", s(&regimes.join("regimes.csv")), s(&d.join("windows.json"))]);
    ok(&["--config", c, "train", s(&regimes.join("regimes.csv")), s(&world), s(&d.join("train")), "--model", "index_lstm"]);
    ok(&["--config", c, "evaluate", s(&d.join("train/records.json")), s(&d.join("metrics.json"))]);

    let metrics = read_json(&d.join("metrics.json"));
    let ba = metrics["balanced_accuracy_mean"].as_array().unwrap();
    assert_eq!(ba.len(), N_LEADS);
    assert!(ba.iter().all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));

    let eof = read_json(&d.join("eof.json"));
    assert_eq!(eof["n_eof"], 14);
    let windows = read_json(&d.join("windows.json"));
    assert!(windows["counts"]["train"].as_u64().unwrap() > 0);

    // Every output listed in a manifest carries the digest of the file on disk.
    let m = read_json(&d.join("train/manifest.json"));
    for a in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(a["path"].as_str().unwrap()).unwrap();
        use sha2::Digest;
        let hex: String = sha2::Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(a["sha256"].as_str().unwrap(), hex);
    }
}

fn perfect_records(n: usize) -> Vec<ForecastRecord> {
    (0..n)
        .map(|i| {
            let targets: [u8; N_LEADS] = std::array::from_fn(|w| ((i + w) % N_CLASSES) as u8);
            let probs = std::array::from_fn(|w| {
                let mut p = [0.02; N_CLASSES];
                p[targets[w] as usize] = 0.94;
                p
            });
            ForecastRecord::new(7 * i as i64, 0, probs, targets, [0; 6]).unwrap()
        })
        .collect()
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("records.json");
    fs::write(&recs, serde_json::to_string(&perfect_records(40)).unwrap()).unwrap();
    let out = dir.path().join("report.json");
    ok(&["evaluate", s(&recs), s(&out)]);
    let report = read_json(&out);
    for v in report["balanced_accuracy_mean"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 1.0);
    }
}

#[test]
fn ensemble_runs_reproduce_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = demo_config();
    let c = s(&cfg);
    let world = d.join("world");
    ok(&["--config", c, "synth", s(&world), "--winters", "10"]);
    let truth = world.join("regimes_truth.csv");
    let out = d.join("ens");
    let args = ["--config", c, "--seed", "7", "ensemble", s(&truth), s(&world), s(&out), "--members", "4", "--models", "lstm"];
    ok(&args);
    let first = fs::read(out.join("manifest.json")).unwrap();
    ok(&args);
    let second = fs::read(out.join("manifest.json")).unwrap();
    assert_eq!(first, second);

    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["seeds"], serde_json::json!([7, 8, 9, 10]));
    let ckpts: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["path"].as_str().unwrap().ends_with(".ckpt"))
        .map(|a| a["sha256"].as_str().unwrap())
        .collect();
    assert_eq!(ckpts.len(), 4);
    let distinct: std::collections::BTreeSet<&str> = ckpts.iter().copied().collect();
    assert_eq!(distinct.len(), 4);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eof", s(&dir.path().join("absent.grd")), s(&dir.path().join("eof.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--percentile", "120", "evaluate", "a.json", "b.json"]).status.code(), Some(2));
}

#[test]
fn corrupt_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.grd");
    fs::write(&bad, b"GRD1 but truncated").unwrap();
    let out = run(&["preprocess", s(&bad), s(&dir.path().join("out.grd"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn degenerate_field_is_a_numeric_abort() {
    let dir = tempfile::tempdir().unwrap();
    let nt = 40;
    let field = GriddedField::new(
        "z500",
        "m",
        (0..nt as i64).collect(),
        vec![30.0, 40.0, 50.0, 60.0],
        vec![-20.0, 0.0, 20.0, 40.0, 60.0],
        vec![5.0; nt * 20],
    )
    .unwrap();
    let grd = dir.path().join("flat.grd");
    write_grid(&grd, &field).unwrap();
    let out = run(&["eof", s(&grd), s(&dir.path().join("eof.json"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_merges_summaries_into_csv() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    fs::write(
        &summary,
        serde_json::json!([{ "model": "lstm", "balanced_accuracy_mean": [0.5, 0.4], "balanced_accuracy_std": [0.1, 0.0] }])
            .to_string(),
    )
    .unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["report", s(&bundle), s(&summary)]);
    let csv = fs::read_to_string(bundle.join("skill.csv")).unwrap();
    assert_eq!(csv.lines().collect::<Vec<_>>(), [
        "model,lead_week,balanced_accuracy_mean,balanced_accuracy_std",
        "lstm,1,0.5,0.1",
        "lstm,2,0.4,0.0",
    ]);
}
