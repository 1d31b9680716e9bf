use std::path::Path;
use std::process::{Command, Output};

fn geodyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodyn")).current_dir(dir).args(args).output().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path) {
    let o = geodyn(dir, &["generate", "--per-class", "5", "--dim", "3", "--length", "6", "--out", "d.gdds"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_and_validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(geodyn(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(geodyn(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let o = geodyn(dir.path(), &["generate", "--per-class", "0", "--out", "x.gdds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.gdds").exists());
}

#[test]
fn missing_files_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = geodyn(dir.path(), &["eval", "--data", "d.gdds", "--checkpoint", "none.gdyn"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("none.gdyn"));
    std::fs::write(dir.path().join("bad.gdyn"), b"GDYN garbage").unwrap();
    let o = geodyn(dir.path(), &["eval", "--data", "d.gdds", "--checkpoint", "bad.gdyn"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_epoch_training_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p);
    let o = geodyn(p, &["train", "--data", "d.gdds", "--out", "m.gdyn", "--epochs", "0", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&std::fs::read(p.join("m.json")).unwrap());
    assert!(report["final_loss"].as_f64().unwrap() > 0.0);
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 0);
    assert_eq!(report["config"]["model"]["dim"], 3);
    assert!(report["version"].is_string());

    let ck = geodyn::train::load_checkpoint(&p.join("m.gdyn")).unwrap();
    let mut cfg: geodyn::ssm::ModelConfig = serde_json::from_value(report["config"]["model"].clone()).unwrap();
    cfg.dim = 3;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    assert_eq!(ck, geodyn::ssm::ModelParams::init(&cfg, &mut rng).unwrap());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p);
    let cfg = r#"{"mode": "recurrent", "model": {"layers": 1, "lag": 2}, "train": {"epochs": 1, "lr": 0.01}}"#;
    std::fs::write(p.join("cfg.json"), cfg).unwrap();
    let o = geodyn(p, &["train", "--config", "cfg.json", "--lag", "3", "--data", "d.gdds", "--out", "m.gdyn"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o.stdout);
    assert_eq!(r["config"]["mode"], "recurrent");
    assert_eq!(r["config"]["model"]["layers"], 1);
    assert_eq!(r["config"]["model"]["lag"], 3);
    assert_eq!(r["config"]["train"]["epochs"], 1);

    std::fs::write(p.join("bad.json"), r#"{"model": {"lag": 0}}"#).unwrap();
    let o = geodyn(p, &["train", "--config", "bad.json", "--data", "d.gdds", "--out", "x.gdyn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn xval_reports_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = geodyn(dir.path(), &["xval", "--data", "d.gdds", "--folds", "5", "--epochs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o.stdout);
    assert_eq!(r["folds"].as_array().unwrap().len(), 5);
    let s = r["summary"]["accuracy"].as_str().unwrap();
    assert!(s.contains(" ± "), "{s}");
    let o = geodyn(dir.path(), &["xval", "--data", "d.gdds", "--folds", "7", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attention_dump_writes_masks_and_ranked_edges() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p);
    assert!(geodyn(p, &["train", "--data", "d.gdds", "--out", "m.gdyn", "--epochs", "0"]).status.success());
    let o = geodyn(p, &["attention-dump", "--data", "d.gdds", "--checkpoint", "m.gdyn", "--out-dir", "att", "--index", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mask = std::fs::read_to_string(p.join("att/layer0_mask.csv")).unwrap();
    assert_eq!(mask.lines().count(), 3);
    assert!(mask.lines().all(|l| l.split(',').count() == 3));
    let edges = std::fs::read_to_string(p.join("att/layer1_top20.csv")).unwrap();
    let weights: Vec<f64> = edges.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(weights.len(), 3);
    assert!(weights.windows(2).all(|w| w[0] >= w[1]));
    let o = geodyn(p, &["attention-dump", "--data", "d.gdds", "--checkpoint", "m.gdyn", "--out-dir", "att", "--index", "99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_builds_datasets_and_names_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let series = |k: f64| -> String {
        (0..3)
            .map(|c| (0..12).map(|t| ((t as f64 + 1.0) * (c as f64 + k)).sin().to_string()).collect::<Vec<_>>().join(",") + "\n")
            .collect()
    };
    std::fs::write(p.join("a.csv"), series(1.0)).unwrap();
    std::fs::write(p.join("b.csv"), series(1.7)).unwrap();
    std::fs::write(p.join("labels.csv"), "file,label\na.csv,rest\nb.csv,motor\n").unwrap();
    let o = geodyn(p, &["ingest", "--kind", "timeseries", "--window", "5", "--labels", "labels.csv", "--out", "ts.gdds"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ds = geodyn::data::LabeledDataset::read(&p.join("ts.gdds")).unwrap();
    assert_eq!(ds.manifest.class_names, vec!["motor", "rest"]);
    assert_eq!(ds.labels(), vec![1, 0]);
    assert_eq!((ds.manifest.dim, ds.manifest.length), (3, 12));

    let o = geodyn(p, &["ingest", "--kind", "timeseries", "--window", "13", "--labels", "labels.csv", "--out", "x.gdds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a.csv"), "{}", stderr(&o));

    let clip: String = (0..8)
        .map(|t| (0..15 * 3).map(|k| ((t * 7 + k * 3) as f64 * 0.11).sin().to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(p.join("s.csv"), &clip).unwrap();
    std::fs::write(p.join("skel.csv"), "s.csv,0\ns.csv,1\n").unwrap();
    let o = geodyn(p, &["ingest", "--kind", "skeleton", "--window", "4", "--labels", "skel.csv", "--out", "sk.gdds"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&o.stdout)["manifest"]["dim"], 42);
}
