use std::fs;
use std::path::Path;
use std::process::Command;

use scalab::manifest::{sha256_hex, Manifest};
use scalab::pipeline::Lab;
use scalab::{LabError, PipelineConfig};

fn small() -> PipelineConfig {
    PipelineConfig::parse(include_str!("../configs/small.conf")).unwrap()
}

fn early_stages(out: &Path) {
    let lab = Lab::new(small(), out);
    lab.capture().unwrap();
    lab.train().unwrap();
    lab.attack().unwrap();
}

#[test]
fn attack_before_train_names_the_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::new(small(), dir.path());
    lab.capture().unwrap();
    match lab.attack() {
        Err(e @ LabError::MissingArtifact { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("models/"), "{msg}");
            assert!(msg.contains("train"), "{msg}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn capture_before_anything_else_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let err = Lab::new(small(), dir.path()).train().unwrap_err();
    assert!(err.to_string().contains("traces/unprotected.sct"), "{err}");
}

#[test]
fn reruns_reproduce_every_artifact() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    early_stages(a.path());
    early_stages(b.path());
    let (ma, mb) = (Manifest::load(a.path()).unwrap().unwrap(), Manifest::load(b.path()).unwrap().unwrap());
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.path().join("manifest.json")).unwrap(), fs::read(b.path().join("manifest.json")).unwrap());
    assert_eq!(fs::read(a.path().join("reports/attack.csv")).unwrap(), fs::read(b.path().join("reports/attack.csv")).unwrap());
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    early_stages(dir.path());
    let m = Manifest::load(dir.path()).unwrap().unwrap();
    assert_eq!(m.master_seed, 3);
    for stage in ["capture", "train", "attack"] {
        assert!(m.artifacts.iter().any(|r| r.stage == stage && r.complete), "{stage}");
    }
    for r in &m.artifacts {
        let bytes = fs::read(dir.path().join(&r.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), r.sha256, "{}", r.path);
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    Lab::new(small(), a.path()).capture().unwrap();
    let mut other = small();
    other.seed = 4;
    Lab::new(other, b.path()).capture().unwrap();
    let ma = Manifest::load(a.path()).unwrap().unwrap();
    let mb = Manifest::load(b.path()).unwrap().unwrap();
    let trace = "traces/unprotected.sct";
    assert_ne!(ma.get(trace).unwrap().sha256, mb.get(trace).unwrap().sha256);
}

fn scalab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scalab")).args(args).env_remove("SCALAB_OUT").output().unwrap()
}

#[test]
fn cli_runs_the_whole_pipeline_on_the_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/small.conf");
    let run = scalab(&["--config", config, "--out", out, "all"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    for file in [
        "asm/aes_round1.asm",
        "models/mlp.model",
        "models/cnn.model",
        "models/ta.template",
        "perturbations/mlp.csv",
        "countermeasure/annotated.asm",
        "countermeasure/protected.asm",
        "reports/evaluate.csv",
        "reports/overhead.csv",
    ] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }

    let header = fs::read_to_string(dir.path().join("perturbations/mlp.csv")).unwrap();
    assert_eq!(
        header.lines().next(),
        Some("trace_id,position,amplitude,success,confidence_target_class,achieved_confidence")
    );

    let overhead = fs::read_to_string(dir.path().join("reports/overhead.csv")).unwrap();
    let lines: Vec<&str> = overhead.lines().collect();
    assert_eq!(lines[0], "variant,min,avg,max");
    assert_eq!(lines[1], "unprotected,387,387.000,387");
    let fields: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fields[0], "protected");
    let (min, avg, max): (u64, f64, u64) = (fields[1].parse().unwrap(), fields[2].parse().unwrap(), fields[3].parse().unwrap());
    assert!(min as f64 <= avg && avg <= max as f64 && avg > 387.0);
    assert_eq!(fields[2].split('.').nth(1).map(str::len), Some(3));

    // the annotated program still assembles, with its noise slots
    let annotated = fs::read_to_string(dir.path().join("countermeasure/annotated.asm")).unwrap();
    let program = scalab_core::vm::assemble(&annotated).unwrap();
    assert!(!program.noise_slots().is_empty());
}

#[test]
fn cli_reports_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = scalab(&["--out", dir.path().to_str().unwrap(), "attack"]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.starts_with("scalab: "), "{err}");
    assert!(err.contains("capture"), "{err}");
}

#[test]
fn cli_show_config_applies_overrides() {
    let run = scalab(&["--seed", "42", "--set", "de.iterations=7", "show-config"]);
    assert!(run.status.success());
    let cfg = PipelineConfig::parse(&String::from_utf8(run.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.de.iterations, 7);
}

#[test]
fn cli_rejects_bad_settings() {
    let run = scalab(&["--set", "nonsense=1", "show-config"]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("nonsense"));
}
