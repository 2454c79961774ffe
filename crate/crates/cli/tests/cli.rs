use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn sdgar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdgar"))
        .args(args)
        .env_remove("SDGAR_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn toy_input() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/interactions.tsv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy_split(dir: &Path) -> PathBuf {
    let out = dir.join("split");
    let o = sdgar(&["split", "--input", s(&toy_input()), "--out", s(&out), "--seed", "0", "--valid-frac", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

const SHAPE: &[&str] = &["--states", "4", "--dim", "8", "--batch-size", "16", "--eval-k", "5"];

fn small(epochs: &'static str) -> Vec<&'static str> {
    let mut v = SHAPE.to_vec();
    v.extend(["--epochs", epochs]);
    v
}

fn train(split: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(split), "--out", s(out), "--seed", "1", "--threads", "1"];
    args.extend_from_slice(extra);
    sdgar(&args)
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdgar(&["split", "--input", "/no/such/file.tsv", "--out", s(dir.path()), "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("input not found"), "{}", stderr(&o));

    let o = train(&dir.path().join("missing"), &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("input not found"), "{}", stderr(&o));
}

#[test]
fn zero_temperature_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let o = train(&split, &dir.path().join("run"), &["--temperature", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("T must be positive"), "{}", stderr(&o));
    assert!(stderr(&o).contains("temperature"), "{}", stderr(&o));
}

#[test]
fn seed_is_required_for_training() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let o = sdgar(&["train", "--data", s(&split), "--out", s(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"), "{}", stderr(&o));
}

#[test]
fn split_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = sdgar(&["split", "--input", s(&toy_input()), "--out", s(&out), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        ["train.tsv", "valid.tsv", "test.tsv"].map(|f| fs::read_to_string(out.join(f)).unwrap())
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "epochs = 3\ndim = 4\nstates = 2\ntemperature = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let o = train(&split, &out, &["--config", s(&cfg), "--epochs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo: toml::Table = fs::read_to_string(out.join("config.toml")).unwrap().parse().unwrap();
    assert_eq!(echo["epochs"].as_integer(), Some(2));
    assert_eq!(echo["dim"].as_integer(), Some(4));
    assert_eq!(echo["temperature"].as_float(), Some(0.5));
    assert_eq!(echo["learning_rate"].as_float(), Some(0.001));
    let log = fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // The echoed file is itself a valid config.
    let again = dir.path().join("again");
    let o = train(&split, &again, &["--config", s(&out.join("config.toml"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("model.ckpt")).unwrap(),
        fs::read(again.join("model.ckpt")).unwrap()
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "epoch = 3\n").unwrap();
    let o = train(&split, &dir.path().join("run"), &["--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = train(&split, out, &["--epochs", "0", "--dim", "8", "--sampler", "self_adversarial"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(fs::read_to_string(a.join("train_log.jsonl")).unwrap(), "");
    assert_eq!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
}

fn printed_ndcg(o: &Output) -> f64 {
    let out = stdout(o);
    out.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn eval_report_matches_printed_value() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let run = dir.path().join("run");
    let o = train(&split, &run, &small("20"));
    assert!(o.status.success(), "{}", stderr(&o));
    for k in ["5", "100"] {
        let report = dir.path().join(format!("report{k}.json"));
        let o = sdgar(&[
            "eval",
            "--checkpoint",
            s(&run.join("model.ckpt")),
            "--data",
            s(&split),
            "--k",
            k,
            "--report",
            s(&report),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with(&format!("NDCG@{k} ")), "{}", stdout(&o));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        let mean = json["mean_ndcg"].as_f64().unwrap();
        assert!((mean - printed_ndcg(&o)).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&mean));
    }
}

#[test]
fn checkpoint_shape_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let run = dir.path().join("run");
    assert!(train(&split, &run, &["--epochs", "0"]).status.success());

    let other = dir.path().join("other.tsv");
    fs::write(&other, "a\tx\nb\ty\nb\tz\n").unwrap();
    let other_split = dir.path().join("other");
    let o = sdgar(&["split", "--input", s(&other), "--out", s(&other_split), "--seed", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = sdgar(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&other_split)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = train(&other_split, &dir.path().join("r2"), &["--resume", s(&run.join("model.ckpt"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_sdgar"))
        .args(["train", "--out", s(&dir.path().join("run")), "--seed", "1", "--epochs", "0"])
        .env("SDGAR_DATA_DIR", &split)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn resumed_zero_epoch_run_keeps_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    let split = toy_split(dir.path());
    let run = dir.path().join("run");
    assert!(train(&split, &run, &small("20")).status.success());
    let resumed = dir.path().join("resumed");
    let ckpt = run.join("model.ckpt");
    let mut args = small("0");
    args.extend(["--resume", s(&ckpt)]);
    let o = train(&split, &resumed, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = |ckpt: PathBuf| {
        let o = sdgar(&["eval", "--checkpoint", s(&ckpt), "--data", s(&split), "--k", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
        printed_ndcg(&o)
    };
    assert_eq!(eval(run.join("model.ckpt")), eval(resumed.join("model.ckpt")));
}

#[test]
fn toy_smoke_run_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let split = toy_split(dir.path());
    let run = dir.path().join("run");
    let o = train(&split, &run, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sdgar(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&split), "--k", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "toy split + train + eval took {secs:.2}s");
}

#[test]
fn bench_sampler_prints_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.jsonl");
    let o = sdgar(&["bench-sampler", "--grid", "100,1000", "--draws", "10000", "--repeats", "1", "--out", s(&rows)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert!(lines[1].trim_start().starts_with("100 "));
    assert!(lines[2].trim_start().starts_with("1000 "));
    assert_eq!(fs::read_to_string(rows).unwrap().lines().count(), 2);

    let o = sdgar(&["bench-sampler", "--grid", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
