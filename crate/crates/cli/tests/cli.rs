use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn facepipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facepipe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).expect("json error line")
}

/// Synthetic dataset plus a config file sized for it.
fn setup(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = facepipe(&["synth", "--out", data.to_str().unwrap(), "--subjects", "3", "--per-view", "4"]);
    stdout_json(&out);
    let config = dir.join("exp.cfg");
    fs::write(
        &config,
        "# small images\n\
         dataset_root = data\n\
         output_dir = runs\n\
         frontal_count = 4\n\
         left_count = 4\n\
         right_count = 4\n\
         crop_width = 40\n\
         crop_height = 44\n\
         inter_eye_distance = 16\n\
         eye_row = 14\n\
         gabor_frequencies = 2\n\
         gabor_orientations = 4\n\
         rho = 2\n",
    )
    .unwrap();
    config
}

#[test]
fn run_prints_report_and_writes_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let v = stdout_json(&facepipe(&["run", "--config", config.to_str().unwrap()]));
    assert_eq!(v["command"], "run");
    let eer = v["report"]["eer"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&eer));
    let run_dir = PathBuf::from(v["run_dir"].as_str().unwrap());
    assert!(run_dir.starts_with(tmp.path().join("runs")));
    for f in ["model.fpm", "config.txt", "split.csv"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn staged_commands_match_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let cfg = config.to_str().unwrap();
    let full = stdout_json(&facepipe(&["run", "--config", cfg]));

    let staged = ["--config", cfg, "--set", "output_dir=staged"];
    let pre = stdout_json(&facepipe(&[&["preprocess"][..], &staged].concat()));
    let pgms = fs::read_dir(pre["output"].as_str().unwrap()).unwrap().count();
    assert_eq!(pgms, 3);
    let ext = stdout_json(&facepipe(&[&["extract"][..], &staged].concat()));
    assert!(Path::new(ext["output"].as_str().unwrap()).is_file());
    let train = stdout_json(&facepipe(&[&["train"][..], &staged].concat()));
    assert!(Path::new(train["model"].as_str().unwrap()).is_file());
    let eval = stdout_json(&facepipe(&[&["evaluate"][..], &staged].concat()));
    assert_eq!(eval["report"], full["report"]);
}

#[test]
fn evaluate_accepts_explicit_model() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let cfg = config.to_str().unwrap();
    let run = stdout_json(&facepipe(&["run", "--config", cfg]));
    let model = Path::new(run["run_dir"].as_str().unwrap()).join("model.fpm");
    let eval = stdout_json(&facepipe(&[
        "evaluate",
        "--config",
        cfg,
        "--model",
        model.to_str().unwrap(),
    ]));
    assert_eq!(eval["report"], run["report"]);
}

#[test]
fn flags_change_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let cfg = config.to_str().unwrap();
    let base = stdout_json(&facepipe(&["run", "--config", cfg]));
    let noreg = stdout_json(&facepipe(&["run", "--config", cfg, "--no-register"]));
    let literal = stdout_json(&facepipe(&["run", "--config", cfg, "--literal-frequencies"]));
    assert_ne!(base["run_dir"], noreg["run_dir"]);
    assert_ne!(base["run_dir"], literal["run_dir"]);
    let saved = fs::read_to_string(Path::new(noreg["run_dir"].as_str().unwrap()).join("config.txt")).unwrap();
    assert!(saved.contains("register = false"));
}

#[test]
fn multiview_protocol_via_set() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let v = stdout_json(&facepipe(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "protocol=F+L+R",
        "--set",
        "method=nn-cosine",
    ]));
    assert_eq!(v["report"]["protocol"], "F+L+R");
    assert_eq!(v["report"]["method"], "nn-cosine");
}

#[test]
fn missing_config_is_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.cfg");
    let err = stderr_json(&facepipe(&["run", "--config", missing.to_str().unwrap()]));
    assert_eq!(err["error"], "FileNotFound");
    assert!(err["message"].as_str().unwrap().contains("nope.cfg"));
}

#[test]
fn bad_override_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let cfg = config.to_str().unwrap();
    for set in ["no_equals", "bogus_key=1", "svm_c=abc"] {
        let err = stderr_json(&facepipe(&["train", "--config", cfg, "--set", set]));
        assert_eq!(err["error"], "Config", "{set}");
    }
}

#[test]
fn corrupt_model_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let cfg = config.to_str().unwrap();
    let model = tmp.path().join("bad.fpm");
    fs::write(&model, b"FPMB\x01garbage that is long enough to hold a checksum").unwrap();
    let err = stderr_json(&facepipe(&["evaluate", "--config", cfg, "--model", model.to_str().unwrap()]));
    assert_eq!(err["error"], "CorruptFile");
}

#[test]
fn unregistered_without_eyes_needs_no_register() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    fs::remove_file(tmp.path().join("data/eyes.csv")).unwrap();
    let cfg = config.to_str().unwrap();
    let err = stderr_json(&facepipe(&["run", "--config", cfg]));
    assert_eq!(err["error"], "MissingAnnotation");
    stdout_json(&facepipe(&["run", "--config", cfg, "--no-register"]));
}

#[test]
fn defaults_parse_back() {
    let out = facepipe(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = facepipe::ExperimentConfig::parse_str(&text).unwrap();
    assert_eq!(parsed.canonical(), text);
}
