use std::path::Path;
use std::process::{Command, Output};

use aom_core::data::{SensorProfile, SyntheticDatasetConfig};
use aom_core::net::{DecoderConfig, EncoderConfig};
use aom_core::pretrain::TrainConfig;

fn aom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.model.encoder = EncoderConfig {
        depth: 1,
        embed_dim: 16,
        num_heads: 2,
        ..EncoderConfig::default()
    };
    c.model.decoder = DecoderConfig {
        depth: 1,
        decoder_dim: 8,
        num_heads: 2,
        ..DecoderConfig::default()
    };
    c.model.head_dim = 8;
    c.data = SyntheticDatasetConfig::generated(&SensorProfile::sentinel2(), 4, 8, 0);
    c.patch_size_set = vec![4, 8];
    c.dataset_size = 8;
    c.batch_size = 4;
    c.steps = 2;
    c
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pretrain_probe_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    write_json(&cfg, &tiny_config());
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("log.csv");
    let o = aom(&["pretrain", "--config", s(&cfg), "--out", s(&ckpt), "--log", s(&log)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let id = stdout(&o).trim().to_string();
    assert_eq!(id.len(), 16);
    let log = std::fs::read_to_string(&log).unwrap();
    assert!(log.starts_with("step,scale_recon_0,scale_recon_1,recon_mean,align,total,lr,seed"));
    assert_eq!(log.lines().count(), 3);

    let probe = dir.path().join("probe.json");
    write_json(
        &probe,
        &serde_json::json!({"data": tiny_config().data, "train_size": 16, "test_size": 8}),
    );
    let o = aom(&[
        "probe",
        "--ckpt",
        s(&ckpt),
        "--bands",
        "3,2,1",
        "--patch",
        "4",
        "--probe-config",
        s(&probe),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("bands,probe,0,3,3 2 1,4,"), "{row}");
    assert!(row.contains(&id));

    let subsets = dir.path().join("subsets.txt");
    std::fs::write(&subsets, "0,1,2,3,4,5,6,7,8,9,10,11,12\n3,2,1\n").unwrap();
    let out = dir.path().join("bands.csv");
    let o = aom(&[
        "ablate-bands",
        "--ckpt",
        s(&ckpt),
        "--subsets",
        s(&subsets),
        "--patch",
        "8",
        "--probe-config",
        s(&probe),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(&out)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("bands,"))
            .count(),
        2
    );

    let o = aom(&[
        "ablate-patch",
        "--ckpt",
        s(&ckpt),
        "--sizes",
        "2,4,8",
        "--seeds",
        "0,1",
        "--probe-config",
        s(&probe),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("# spread="));

    let maps = dir.path().join("maps");
    let o = aom(&[
        "export-features",
        "--ckpt",
        s(&ckpt),
        "--patch",
        "4",
        "--stage",
        "tokenizer",
        "--out",
        s(&maps),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 13);
}

#[test]
fn gen_data_writes_scenes_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("data.json");
    write_json(&cfg, &tiny_config().data);
    let out = dir.path().join("scenes");
    let o = aom(&[
        "gen-data",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--count",
        "5",
        "--split",
        "probe-train",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels = std::fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 6);
    assert!(out.join("scene_00004.aomb").exists());
}

#[test]
fn pi_resize_check_exit_codes() {
    let o = aom(&[
        "check-pi-resize",
        "--pin",
        "4",
        "--pt",
        "8",
        "--trials",
        "100",
        "--batches",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("batch,pi_distortion,bilinear_distortion,oracle_distortion"));
    assert!(stdout(&o).contains("# pass=true"));
    let o = aom(&["check-pi-resize", "--pin", "8", "--pt", "4", "--trials", "10"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    write_json(&cfg, &tiny_config());
    let o = aom(&[
        "gradcheck",
        "--config",
        s(&cfg),
        "--params",
        "5",
        "--images",
        "1",
        "--threshold",
        "0",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("name,offset,analytic,numeric,rel_error"));
    let o = aom(&["gradcheck", "--config", s(&cfg), "--params", "5", "--images", "1"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let mut c = tiny_config();
    c.patch_size_set = vec![3];
    write_json(&cfg, &c);
    let o = aom(&["pretrain", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
    assert_eq!(code(&aom(&["probe", "--ckpt", "/nonexistent"])), 1);
    assert_eq!(code(&aom(&["no-such-command"])), 1);
    assert_eq!(code(&aom(&["--help"])), 0);
}
