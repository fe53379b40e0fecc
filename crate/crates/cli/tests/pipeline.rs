use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
tasks = ["marker_detect"]
template = "compact"
gate = 0.0

[data]
n_train = 60
n_eval = 12

[model]
source = "trained"
n_layers = 1
d_model = 16
n_heads = 2
d_ffn = 16
max_seq = 32

[train]
steps = 4
batch_size = 2

[attribution]
scorers = ["neuron_llm", "random"]
m = 4
z = 8
k = 4
tr = 2

[intervention]
budget = 4
step = 0.5
"#;

fn neuroprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuroprobe"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn ok(dir: &Path, args: &[&str]) {
    let out = neuroprobe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = setup();
    ok(dir.path(), &["-c", "tiny.toml", "run"]);
    let run = dir.path().join("run");
    for f in [
        "vocab.txt",
        "model.npw",
        "data/marker_detect/train.jsonl",
        "data/marker_detect/eval.proxies.jsonl",
        "sets/marker_detect.neuron_llm.json",
        "plans/marker_detect.random.degrade.json",
        "reports/marker_detect.neuron_llm.enhance.sweep.csv",
        "reports/summary.csv",
        "reports/report.json",
        "reports/train_curve.tsv",
        "manifests/report.json",
    ] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifests/eval.json")).unwrap()).unwrap();
    assert!(manifest["inputs"]["model.npw"].is_string());
    assert!(manifest["config_hash"].is_string());
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), "seed = 1\nunknown_key = 2\n").unwrap();
    assert_eq!(neuroprobe(dir.path(), &["-c", "bad.toml", "config"]).status.code(), Some(1));
    assert_eq!(neuroprobe(dir.path(), &["-c", "tiny.toml", "--set", "attribution.m=0", "config"]).status.code(), Some(1));
    assert_eq!(neuroprobe(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_upstream_artifact() {
    let dir = setup();
    let out = neuroprobe(dir.path(), &["-c", "tiny.toml", "attribute"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(neuroprobe(dir.path(), &["-c", "missing.toml", "gen"]).status.code(), Some(2));
}

#[test]
fn retrained_model_makes_sets_stale() {
    let dir = setup();
    for cmd in ["gen", "train", "attribute"] {
        ok(dir.path(), &["-c", "tiny.toml", cmd]);
    }
    let sets = dir.path().join("run/sets/marker_detect.neuron_llm.json");
    let before = fs::read(&sets).unwrap();
    ok(dir.path(), &["-c", "tiny.toml", "--set", "train.seed=9", "train"]);
    let out = neuroprobe(dir.path(), &["-c", "tiny.toml", "intervene"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // the downstream command refused without touching its inputs
    assert_eq!(fs::read(&sets).unwrap(), before);
}

#[test]
fn corrupted_weights_are_rejected() {
    let dir = setup();
    for cmd in ["gen", "train"] {
        ok(dir.path(), &["-c", "tiny.toml", cmd]);
    }
    let w = dir.path().join("run/model.npw");
    let mut bytes = fs::read(&w).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&w, bytes).unwrap();
    assert_eq!(neuroprobe(dir.path(), &["-c", "tiny.toml", "attribute"]).status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let a = setup();
    let b = setup();
    ok(a.path(), &["-c", "tiny.toml", "run"]);
    ok(b.path(), &["-c", "tiny.toml", "run"]);
    for f in ["sets/marker_detect.neuron_llm.json", "sets/marker_detect.random.json", "reports/report.json", "reports/summary.csv"] {
        let x = fs::read(a.path().join("run").join(f)).unwrap();
        let y = fs::read(b.path().join("run").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    // the worker count does not change results
    ok(b.path(), &["-c", "tiny.toml", "--workers", "1", "attribute"]);
    let x = fs::read(a.path().join("run/sets/marker_detect.neuron_llm.json")).unwrap();
    let y = fs::read(b.path().join("run/sets/marker_detect.neuron_llm.json")).unwrap();
    assert!(x == y, "worker count changed the neuron sets");
    // a different seed changes the random baseline
    ok(b.path(), &["-c", "tiny.toml", "--seed", "4", "run"]);
    let x = fs::read(a.path().join("run/sets/marker_detect.random.json")).unwrap();
    let y = fs::read(b.path().join("run/sets/marker_detect.random.json")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn printed_config_round_trips() {
    let dir = setup();
    let out = neuroprobe(dir.path(), &["-c", "tiny.toml", "--set", "attribution.k=3", "config"]);
    assert!(out.status.success());
    fs::write(dir.path().join("echo.toml"), &out.stdout).unwrap();
    let again = neuroprobe(dir.path(), &["-c", "echo.toml", "config"]);
    assert_eq!(out.stdout, again.stdout);
    assert!(String::from_utf8_lossy(&out.stdout).contains("k = 3"));
}
