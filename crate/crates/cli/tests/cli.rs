use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use cmdiad_core::data::StructuredPointCloud;
use cmdiad_core::preprocess::io::write_xyz_tiff;

const CONFIG: &str = r#"{
    "synth": {"n_train": 10, "n_test_normal": 5, "n_test_anomalous": 5},
    "raw_synth": {"n_train": 3, "n_test_normal": 2, "n_test_anomalous": 2, "size": 24},
    "detector": {
        "train": {"epochs": 4, "warmup_epochs": 1, "checkpoint_every": 2, "hidden": [32], "learning_rate": 0.002}
    }
}"#;

/// Runs the binary in `cwd` and returns (exit code, stdout).
fn run(cwd: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cmdiad"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CMDIAD_DATA_ROOT")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    eprintln!("cmdiad {}\n{stdout}{}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap(), stdout)
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let (code, stdout) = run(cwd, args);
    assert_eq!(code, 0, "cmdiad {}", args.join(" "));
    stdout
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), CONFIG).unwrap();
    dir
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(path.as_ref()).unwrap()).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

const MTFI: [&str; 4] = ["--route", "FtoF", "--main", "pc"];

fn full_run(cwd: &Path) {
    let base = ["-c", "config.json", "--data-root", "data", "-o", "runs", "-j", "2"];
    let with = |cmd: &str, extra: &[&str]| -> Vec<String> {
        std::iter::once(cmd).chain(base).chain(extra.iter().copied()).map(String::from).collect()
    };
    let call = |args: Vec<String>| ok(cwd, &args.iter().map(String::as_str).collect::<Vec<_>>());
    call(with("synth", &["--class", "cup,gear"]));
    call(with("distill", &MTFI));
    call(with("bank", &MTFI));
    call(with("infer", &MTFI));
    call(with("eval", &MTFI));
    call(with("sweep", &MTFI));
    call(with("ablate-metric", &MTFI));
}

#[test]
fn every_subcommand_runs_and_reruns_bitwise() {
    let a = workspace();
    full_run(a.path());
    let runs = a.path().join("runs");

    let losses = json(runs.join("cup/distill/losses.json"));
    assert_eq!(losses["losses"].as_array().unwrap().len(), 4);
    assert_eq!(losses["checkpoints"], serde_json::json!([2, 4]));
    assert!(runs.join("cup/distill/epoch_0002/manifest.json").is_file());

    let report = json(runs.join("report.json"));
    assert_eq!(report["classes"].as_array().unwrap().len(), 2);
    let results = runs.join("gear/results");
    for ext in ["json", "cmft", "png"] {
        assert!(results.join(format!("anomaly_000.{ext}")).is_file());
    }

    let sweep = json(runs.join("cup/sweep.json"));
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let best = rows.iter().map(|r| r["i_auroc"].as_f64().unwrap()).fold(f64::MIN, f64::max);
    let first_best = rows.iter().find(|r| r["i_auroc"].as_f64().unwrap() == best).unwrap();
    assert_eq!(sweep["selected"], first_best["epoch"]);

    let ablation = json(runs.join("ablate-metric.json"));
    let ablation = ablation.as_array().unwrap();
    let metrics: Vec<_> = ablation.iter().map(|r| r["metric"].as_str().unwrap()).collect();
    assert_eq!(metrics, ["l1", "l2", "cosine"]);
    for r in ablation {
        assert_eq!(r["bank_sources"], ablation[0]["bank_sources"]);
    }

    let manifest = json(runs.join("infer.manifest.json"));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["seeds"]["train"], 0);
    let inputs = manifest["inputs"].as_object().unwrap();
    assert!(inputs.contains_key("cup/test/good/feat/pc/000.cmft"));
    assert!(inputs.values().all(|v| v.as_str().unwrap().len() == 64));

    let b = workspace();
    full_run(b.path());
    assert_eq!(tree(&runs), tree(&b.path().join("runs")));
    assert_eq!(tree(&a.path().join("data")), tree(&b.path().join("data")));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let w = workspace();
    let cwd = w.path();
    assert_eq!(run(cwd, &["eval", "--data-root", "missing"]).0, 1);
    assert_eq!(run(cwd, &["eval"]).0, 1);
    assert_eq!(run(cwd, &["frobnicate"]).0, 1);
    assert_eq!(run(cwd, &["--help"]).0, 0);

    ok(cwd, &["synth", "-c", "config.json", "--data-root", "data", "--class", "cup"]);
    assert_eq!(run(cwd, &["bank", "--data-root", "data", "--fraction", "1.5"]).0, 1);
    assert_eq!(run(cwd, &["bank", "--data-root", "data", "--class", "mug"]).0, 1);
    assert_eq!(run(cwd, &["distill", "--data-root", "data", "--mode", "dual"]).0, 1);
    std::fs::write(cwd.join("bad.json"), r#"{"detecter": {}}"#).unwrap();
    assert_eq!(run(cwd, &["bank", "-c", "bad.json", "--data-root", "data"]).0, 1);

    // Scores were never written.
    assert_eq!(run(cwd, &["eval", "--data-root", "data"]).0, 2);
    // One class with an empty training split: the other still completes.
    std::fs::create_dir_all(cwd.join("data/empty/train/good")).unwrap();
    let (code, _) = run(cwd, &["bank", "--data-root", "data", "--mode", "single-pc"]);
    assert_eq!(code, 3);
    assert!(cwd.join("runs/cup/banks/pc/manifest.json").is_file());
}

#[test]
fn data_root_can_come_from_the_environment() {
    let w = workspace();
    ok(w.path(), &["synth", "-c", "config.json", "--data-root", "data"]);
    let out = Command::new(env!("CARGO_BIN_EXE_cmdiad"))
        .args(["bank", "--mode", "single-rgb"])
        .current_dir(w.path())
        .env("CMDIAD_DATA_ROOT", w.path().join("data"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(w.path().join("runs/synthetic/banks/rgb/coreset.cmft").is_file());
}

#[test]
fn preprocess_reports_failures_and_is_idempotent() {
    let w = workspace();
    let cwd = w.path();
    ok(cwd, &["synth", "-c", "config.json", "--data-root", "raw", "--raw", "--class", "bump"]);
    // A scan with no valid points cannot have a plane fitted.
    write_xyz_tiff(&StructuredPointCloud::zeros(24, 24), cwd.join("raw/bump/train/good/xyz/001.tiff")).unwrap();

    assert_eq!(run(cwd, &["preprocess", "-c", "config.json", "--data-root", "raw", "--into", "raw"]).0, 1);
    let args = ["preprocess", "-c", "config.json", "--data-root", "raw", "--into", "clean", "-o", "prep"];
    assert_eq!(run(cwd, &args).0, 3);
    let manifest = json(cwd.join("prep/preprocess.manifest.json"));
    let failures = manifest["summary"]["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["id"], "bump/train/good/001");
    let planes = manifest["summary"]["planes"].as_object().unwrap();
    assert_eq!(planes.len(), 6);

    // Background z = 0.5 + 0.1 x.
    let norm = (1.0f64 + 0.01).sqrt();
    for plane in planes.values() {
        let n: Vec<f64> = plane["normal"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((n[0] + 0.1 / norm).abs() < 1e-3 && n[1].abs() < 1e-3 && (n[2] - 1.0 / norm).abs() < 1e-3, "{n:?}");
        assert!((plane["offset"].as_f64().unwrap() - 0.5 / norm).abs() < 1e-3);
    }
    assert!(cwd.join("clean/bump/test/anomaly/gt/000.png").is_file());
    assert!(!cwd.join("clean/bump/train/good/xyz/001.tiff").exists());

    let first = tree(&cwd.join("clean"));
    let first_manifest = std::fs::read(cwd.join("prep/preprocess.manifest.json")).unwrap();
    assert_eq!(run(cwd, &args).0, 3);
    assert_eq!(first, tree(&cwd.join("clean")));
    assert_eq!(first_manifest, std::fs::read(cwd.join("prep/preprocess.manifest.json")).unwrap());
}
