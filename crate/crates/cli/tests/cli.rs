use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mqne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqne")).args(args).output().expect("binary runs")
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn library_counts() {
    let o = mqne(&["library", "--qubits", "9", "--count-only"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "6688");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lib7.txt");
    let o = mqne(&["library", "--qubits", "7", "--mode", "full", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let blocks = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(blocks, 896);

    let o = mqne(&["library", "--qubits", "5", "--mode", "cutoff:1", "--count-only"]);
    assert_eq!(stdout(&o).trim(), "5");
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(mqne(&["library", "--qubits", "40"]).status.code(), Some(1));
    assert_eq!(mqne(&["library", "--qubits", "4", "--mode", "cutoff:3"]).status.code(), Some(1));
    assert_eq!(mqne(&["report", "/nonexistent/bundle"]).status.code(), Some(1));
}

#[test]
fn graph_command_writes_adjacency() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.txt");
    let o = mqne(&["graph", "--qubits", "3", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"));
    assert!(!fs::read_to_string(&out).unwrap().is_empty());
}

#[test]
fn dataset_cache_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mqne(&["dataset", "spt", "--n", "4", "--samples", "20", "--seed", "3", "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&out).unwrap(), stdout(&o))
    };
    let (a, sa) = run("a.bin");
    let (b, sb) = run("b.bin");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["schema"], "mqne-dataset/1");

    let out = dir.path().join("mnist.bin");
    let o = mqne(&[
        "dataset",
        "mnist",
        "--images",
        data_dir().join("mnist-1-9-images.idx3-ubyte").to_str().unwrap(),
        "--labels",
        data_dir().join("mnist-1-9-labels.idx1-ubyte").to_str().unwrap(),
        "--digits",
        "1,9",
        "--split",
        "500,200,0",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("split 500/200/0"));
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(
        &p,
        format!(
            r#"
version = 1
task = "spt"
master_seed = 11
output = "out"

[data]
spins = 4
samples = 24
split = [16, 8, 0]

[train]
learning_rate = 0.01
batch_size = 4
epochs = 2

[mqne]
n = 3
t = 1
l = 2
l_prime = 1
f_c = 1.0
g_c = 2

[genetic]
n = 3
t = 2
mutation_p = 0.1
length = 2
f_c = 1.0
g_c = 2
{extra}"#
        ),
    )
    .unwrap();
    p
}

const METRICS: [&str; 3] = ["generations.csv", "individuals.csv", "best_history.csv"];

#[test]
fn evolve_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let mut bundles = Vec::new();
    for (threads, name) in [("1", "one"), ("2", "two")] {
        let out = dir.path().join(name);
        let o = mqne(&["--threads", threads, "evolve", cfg, "--output", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
        bundles.push(out);
    }
    for f in METRICS {
        assert_eq!(fs::read(bundles[0].join(f)).unwrap(), fs::read(bundles[1].join(f)).unwrap(), "{f}");
    }
    let gens = fs::read_to_string(bundles[0].join("generations.csv")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bundles[0].join("manifest.json")).unwrap()).unwrap();
    let n = manifest["outcome"]["generations"].as_u64().unwrap() as usize;
    assert!(n == 1 || n == 2);
    assert_eq!(gens.lines().count(), n + 1);
    assert_eq!(manifest["seeds"]["master"], 11);

    let o = mqne(&["report", bundles[0].to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("hashes verified"));

    fs::write(bundles[0].join("individuals.csv"), "tampered\n").unwrap();
    assert_eq!(mqne(&["report", bundles[0].to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn exit_code_reflects_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = mqne(&["evolve", cfg.to_str().unwrap(), "--seed", "4"]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let reached = m["outcome"]["reached_threshold"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if reached { 0 } else { 2 }));
    assert_eq!(m["seeds"]["master"], 4);
}

#[test]
fn genetic_baseline_runs_from_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("ga1");
    let b = dir.path().join("ga2");
    for out in [&a, &b] {
        let o = mqne(&["evolve", cfg.to_str().unwrap(), "--baseline", "genetic", "--output", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("individuals.csv")).unwrap(),
        fs::read(b.join("individuals.csv")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["algorithm"], "genetic");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[bogus]\nx = 1\n");
    assert_eq!(mqne(&["evolve", cfg.to_str().unwrap()]).status.code(), Some(1));
}
