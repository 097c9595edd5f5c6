use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "profile.snapshots_train=1",
    "profile.snapshots_test=1",
    "profile.sequences_train=1",
    "profile.sequences_test=1",
    "profile.sequences_untrained=1",
    "profile.sequence_len=300",
    "vision.epochs=2",
    "vision.arch.channels=[2,2,2,2]",
    "vision.arch.hidden=8",
    "vision.arch.head_hidden=4",
    "ha.epochs=3",
];

fn run(root: &Path, extra_sets: &[&str], args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crossmodal"));
    cmd.env_remove("CROSSMODAL_ARTIFACTS").arg("--artifacts").arg(root);
    for s in TINY.iter().chain(extra_sets) {
        cmd.arg("--set").arg(s);
    }
    cmd.args(args).output().unwrap()
}

fn ok(root: &Path, args: &[&str]) {
    let out = run(root, &[], args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `dir` except the run manifests, which carry wall time.
fn numeric_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(numeric_files(&p));
        } else if p.file_name().unwrap() != "run.json" {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_from_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    for args in [
        &["gen-data"][..],
        &["train-vision"],
        &["train-ha", "--mode", "proposed"],
        &["train-ha", "--mode", "baseline"],
        &["eval", "--phase", "1"],
        &["eval", "--phase", "2"],
        &["pca"],
        &["filter-demo"],
        &["online", "--object", "sphere-large", "--duration", "6"],
        &["compare-curves"],
    ] {
        ok(root, args);
    }
    for f in [
        "data/manifest.json",
        "vision/manifest.json",
        "vision/history.csv",
        "ha-proposed/manifest.json",
        "ha-proposed/transfer.json",
        "ha-baseline/history.csv",
        "eval-phase1/metrics.json",
        "eval-phase2/metrics.json",
        "pca/projections.csv",
        "pca/pca.json",
        "filter-demo/filter_demo.csv",
        "online/online.jsonl",
        "online/summary.json",
        "curves/curves.json",
    ] {
        assert!(root.join(f).is_file(), "{f} missing");
    }
    for dir in ["data", "vision", "ha-proposed", "eval-phase2", "online"] {
        let run: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(root.join(dir).join("run.json")).unwrap()).unwrap();
        assert!(run["config_hash"].as_str().unwrap().len() == 64);
        assert!(run["wall_time_s"].as_f64().unwrap() >= 0.0);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("ha-proposed/manifest.json")).unwrap()).unwrap();
    let prov = &manifest["meta"]["extra"]["provenance"];
    assert!(prov["upstream"]["data"].is_string() && prov["upstream"]["vision"].is_string());

    let online = std::fs::read_to_string(root.join("online/online.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = online.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 60);
    assert_eq!(lines.iter().filter(|l| l["status"] == "warming-up").count(), 50);
}

#[test]
fn proposed_training_needs_vision_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data"]);
    let out = run(tmp.path(), &[], &["train-ha", "--mode", "proposed"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("vision checkpoint"), "{}", stderr(&out));
    assert!(stderr(&out).contains("train-vision"));
    // the baseline needs no image model
    ok(tmp.path(), &["train-ha", "--mode", "baseline"]);
}

#[test]
fn missing_dataset_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &[], &["train-vision"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("dataset bundle") && stderr(&out).contains("gen-data"));
}

#[test]
fn mixed_provenance_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data"]);
    let out = run(tmp.path(), &["master_seed=2"], &["train-vision"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("provenance mismatch"));

    ok(tmp.path(), &["train-vision"]);
    ok(tmp.path(), &["train-ha", "--mode", "proposed"]);
    // retraining the image model with other settings invalidates the
    // phase-2 checkpoint built on it
    let out = run(tmp.path(), &["vision.epochs=1"], &["train-vision"]);
    assert!(out.status.success());
    let out = run(tmp.path(), &["vision.epochs=1"], &["eval", "--phase", "2", "--mode", "proposed"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(tmp.path(), &["ha.no_such_key=1"], &["gen-data"])), 2);
    assert_eq!(code(&run(tmp.path(), &["ha.epochs=\"many\""], &["gen-data"])), 2);
    assert_eq!(code(&run(tmp.path(), &[], &["eval", "--phase", "3"])), 2);
    assert_eq!(code(&run(tmp.path(), &[], &["no-such-command"])), 2);
    ok(tmp.path(), &["gen-data"]);
    assert_eq!(code(&run(tmp.path(), &[], &["online", "--object", "teapot", "--mode", "baseline"])), 3);
}

#[test]
fn divergence_exits_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data"]);
    let out = run(tmp.path(), &["ha.adam.lr=1e30", "ha.clip_norm=1e30"], &["train-ha", "--mode", "baseline"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for root in [a.path(), b.path()] {
        for args in [
            &["gen-data"][..],
            &["train-vision"],
            &["train-ha", "--mode", "proposed"],
            &["train-ha", "--mode", "baseline"],
            &["eval", "--phase", "2"],
        ] {
            ok(root, args);
        }
    }
    let fa = numeric_files(a.path());
    let fb = numeric_files(b.path());
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() > 20);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn env_variable_sets_artifact_root() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crossmodal"));
    cmd.env("CROSSMODAL_ARTIFACTS", tmp.path());
    for s in TINY {
        cmd.arg("--set").arg(s);
    }
    let out = cmd.arg("gen-data").output().unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("data/manifest.json").is_file());
}
