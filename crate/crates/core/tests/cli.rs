use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use neuroscore::harness::dataset::{import_dataset, PAYLOAD_FILE};
use neuroscore::harness::{read_report, ExperimentConfig};
use neuroscore::nn::checkpoint::load_params;
use neuroscore::synthgen::gen_dataset;

const TINY: &str = r#"
n_per_category = 15
image_size = 12
stage1_epochs = 2
stage2_epochs = 2
baseline_epochs = 2
batch_size = 8
n_shuffles = 2
metric_table = false
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuroscore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_importable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("data");
    let o = bin(&["gen-data", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = gen_dataset(&ExperimentConfig::from_toml_str(TINY).unwrap().gen).unwrap();
    assert_eq!(import_dataset(&out).unwrap(), expected);
}

#[test]
fn train_snapshots_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", &cfg, "--out", s(&data)]).status.success());
    let ckpt = tmp.path().join("model.nsk");
    let snaps = tmp.path().join("snaps");
    let o = bin(&[
        "train", "--data", s(&data), "--regime", "with-eeg", "--seed", "1", "--out", s(&ckpt), "--config", &cfg,
        "--snapshot-dir", s(&snaps),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let init = load_params(&snaps.join("init.nsk")).unwrap();
    let stage1 = load_params(&snaps.join("stage1.nsk")).unwrap();
    let last = load_params(&ckpt).unwrap();
    assert_eq!(init.theta2, stage1.theta2);
    assert_eq!(stage1.theta1, last.theta1);

    let o = bin(&["evaluate", "--data", s(&data), "--ckpt", s(&ckpt), "--seed", "1", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["predicted"].as_array().unwrap().len(), 3);
    assert!(v["error"].as_f64().unwrap() >= 0.0);

    for regime in ["random-eeg", "no-eeg"] {
        let o = bin(&["train", "--data", s(&data), "--regime", regime, "--out", s(&ckpt), "--config", &cfg]);
        assert!(o.status.success(), "{regime}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn experiment_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("exp");
    let o = bin(&["experiment", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_report(&out).unwrap();
    assert_eq!(report.regimes.len(), 3);
    assert!(out.join("table1.tsv").exists() && out.join("table2.tsv").exists());
    assert!(out.join("dataset").join(PAYLOAD_FILE).exists());
    let o = bin(&["report", "--in", s(&out)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("with_eeg") && text.contains("inv_synthetic_neuroscore"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "test_fraction = 2.0");
    let out = tmp.path().join("x");
    assert_eq!(bin(&["gen-data", "--config", &bad, "--out", s(&out)]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), TINY);
    let data = tmp.path().join("data");
    assert!(bin(&["gen-data", "--config", &cfg, "--out", s(&data)]).status.success());
    let ckpt = tmp.path().join("m.nsk");

    let loud = write_config(tmp.path(), &format!("{TINY}\nlearning_rate = 1e6\n"));
    let o = bin(&["train", "--data", s(&data), "--regime", "no-eeg", "--out", s(&ckpt), "--config", &loud]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let payload = data.join(PAYLOAD_FILE);
    let bytes = fs::read(&payload).unwrap();
    fs::write(&payload, &bytes[..bytes.len() / 2]).unwrap();
    let o = bin(&["train", "--data", s(&data), "--regime", "no-eeg", "--out", s(&ckpt), "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at byte"));

    assert_eq!(bin(&["train", "--data", s(&data), "--regime", "sometimes"]).status.code(), Some(2));
}
