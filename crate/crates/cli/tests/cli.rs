use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "seed = 5
[dataset]
n_per_class = 2
[meta]
epochs = 1
[eval]
n_generated = 2
seeds_for_trends = 2

[[agents]]
spec = { conv = 1, pool = 0, att = 0, bn = 1, dr = 0, skip = 1, wide = 1, deep = 0 }
epochs = 5
[[agents]]
spec = { conv = 0, pool = 1, att = 1, bn = 0, dr = 0, skip = 1, wide = 1, deep = 1 }
epochs = 5
[[agents]]
spec = { conv = 1, pool = 1, att = 0, bn = 0, dr = 0, skip = 1, wide = 0, deep = 0 }
epochs = 5
";

fn lgrad(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("cfg.toml");
    if !config.exists() {
        fs::write(&config, CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_lgrad"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = lgrad(dir, args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[meta]\nlamda = 0.1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lgrad"))
        .args(["train-agents", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let missing = Command::new(env!("CARGO_BIN_EXE_lgrad"))
        .args(["train-agents", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn missing_knowledge_base_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["build-graph", "train-meta", "metrics"] {
        let o = lgrad(dir.path(), &[cmd]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("train-agents"));
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["train-agents"]);
    ok(b.path(), &["train-agents", "--seed", "6"]);
    assert_ne!(read(a.path(), "kb.txt"), read(b.path(), "kb.txt"));
}

#[test]
fn full_workflow_writes_expected_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["train-agents"]);
    let kb = read(d, "kb.txt");
    ok(d, &["train-agents"]);
    assert_eq!(read(d, "kb.txt"), kb);
    assert_eq!(kb.lines().filter(|l| l.starts_with("agent ")).count(), 3);

    ok(d, &["build-graph"]);
    assert!(!read(d, "graph.txt").is_empty() && !read(d, "tree.txt").is_empty());

    ok(d, &["train-meta"]);
    let loss = read(d, "loss.csv");
    assert_eq!(loss.lines().next(), Some("epoch,C,D,Llap,total"));
    assert_eq!(loss.lines().count(), 2);

    ok(d, &["generate", "--label", "1", "--count", "0"]);
    assert_eq!(read(d, "images.txt"), "LGRAD-IMG v1 0 8 label 1\n");
    assert_eq!(read(d, "generate.csv").lines().nth(1), Some("1,0,,"));

    ok(d, &["generate", "--label", "2"]);
    assert!(read(d, "images.txt").starts_with("LGRAD-IMG v1 2 8 label 2\n"));

    let o = lgrad(d, &["generate", "--label", "4"]);
    assert_eq!(o.status.code(), Some(1));

    ok(d, &["metrics"]);
    let metrics = read(d, "metrics.csv");
    let rows: Vec<&str> = metrics.lines().collect();
    assert_eq!(rows[0], "model,toy_frechet,diversity,recon_mse");
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("ensemble,"));

    ok(d, &["ablate-models"]);
    assert_eq!(read(d, "ablate_models.csv").lines().count(), 1 + 4 * 2);
    ok(d, &["ablate-connectivity"]);
    assert_eq!(
        read(d, "ablate_connectivity.csv").lines().count(),
        1 + 3 * 2
    );
}
