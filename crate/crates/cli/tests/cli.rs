use std::path::Path;
use std::process::{Command, Output};

use da_precond::scenario::ScenarioConfig;
use da_precond::swmodel::GridSpec;

fn daprec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daprec")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> String {
    let mut cfg = ScenarioConfig::default();
    cfg.grid = GridSpec::new(6, 6, 1.8e6, 1.8e6).unwrap();
    cfg.model.dt = 2400.0;
    cfg.model.steps_per_window = 12;
    cfg.background.spinup_steps = 200;
    cfg.background.average_steps = 100;
    cfg.surrogate.r = 4;
    cfg.experiment.cycles = 2;
    edit(&mut cfg);
    let path = dir.join("scenario.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(daprec(&[]).status.code(), Some(2));
    assert_eq!(daprec(&["bench", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(daprec(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(daprec(&["bench", "--seed", "minus-one"]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let missing = daprec(&["simulate", "--config", "/nonexistent/scenario.json", "--out", out]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"grid": {"nx": 2, "ny": 2, "lx": 1.0, "ly": 1.0}}"#).unwrap();
    let r = daprec(&["simulate", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));

    std::fs::write(&bad, r#"{"unknown_section": 1}"#).unwrap();
    assert_eq!(daprec(&["bench", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(1));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let cfg = tiny_config(dir.path(), |_| {});
    let r = daprec(&["train", "--config", &cfg, "--data", empty.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn spectrum_of_nearly_identity_system_has_unit_condition_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), |c| c.covariance.obs_var = 1e14);
    let out = dir.path().join("spectrum");
    let r = daprec(&["spectrum", "--config", &cfg, "--out", out.to_str().unwrap(), "--iters", "20"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    let spectra = v["spectra"].as_array().unwrap();
    assert_eq!(spectra[0]["variant"], "operator");
    for s in spectra {
        let kappa = s["estimate"]["kappa"].as_f64().unwrap();
        assert!((kappa - 1.0).abs() < 1e-6, "{}: kappa {kappa}", s["variant"]);
    }
}

#[test]
fn gen_data_respects_shard_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), |c| {
        c.dataset.n_samples = 5;
        c.dataset.n_held_out = 1;
        c.dataset.k = 2;
    });
    let out = dir.path().join("data");
    let n = GridSpec::new(6, 6, 1.8e6, 1.8e6).unwrap().state_len() as u64;
    let cap = 24 + 2 * (n + 2 * n * 2) * 8;
    let cap = cap.to_string();
    let r = daprec(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap(), "--max-shard-bytes", &cap]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["dataset.json", "heldout-0000.pcds", "train-0000.pcds", "train-0001.pcds", "train-0002.pcds"]);
}
