use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{"stretch_moment": {"n_rho": 10, "n_angle": 10}}"#;

fn irregflow(args: &[&str], cwd: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_irregflow"));
    cmd.args(args).current_dir(cwd).env_remove("IRREGFLOW_OUT");
    if let Some(d) = env_out {
        cmd.env("IRREGFLOW_OUT", d);
    }
    cmd.output().expect("spawn irregflow")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn writes_the_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = irregflow(&["stretch-moment", "--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap()], dir.path(), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "results.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["experiment"], "stretch-moment");
    assert_eq!(m["seed"], 4);
    // defaults are echoed
    assert_eq!(m["config"]["params"]["time_horizon"], 13.0);
    assert_eq!(m["config"]["covering"]["radii"], 2000);
    assert_eq!(m["config"]["stretch_moment"]["n_rho"], 10);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 100);
    assert!(csv.starts_with("rho,omega_x,omega_y,factor,bound,margin"));
}

#[test]
fn env_var_sets_default_output_dir_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let env_dir = dir.path().join("env");
    let o = irregflow(&["stretch-moment", "--config", &cfg], dir.path(), Some(&env_dir));
    assert!(o.status.success());
    assert!(env_dir.join("stretch-moment").join("results.csv").is_file());

    let explicit = dir.path().join("explicit");
    let o = irregflow(&["stretch-moment", "--config", &cfg, "--out", explicit.to_str().unwrap()], dir.path(), Some(&env_dir));
    assert!(o.status.success());
    assert!(explicit.join("results.csv").is_file());

    let o = irregflow(&["stretch-moment", "--config", &cfg], dir.path(), None);
    assert!(o.status.success());
    assert!(dir.path().join("irregflow-out/stretch-moment/manifest.json").is_file());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for text in [r#"{"sede": 3}"#, r#"{"params": {"alpah": 0.2}}"#, r#"{"chain_growth": {"start": {"orient": "radial"}}}"#] {
        let cfg = write_config(dir.path(), text);
        let o = irregflow(&["stretch-moment", "--config", &cfg], dir.path(), None);
        assert!(!o.status.success(), "{text} accepted");
        assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"), "{text}");
    }
}

#[test]
fn invalid_params_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"params": {"alpha": 0.6, "beta": 0.5}}"#);
    let o = irregflow(&["norms", "--config", &cfg], dir.path(), None);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpha") && err.contains("beta"), "{err}");
}

#[test]
fn config_experiment_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "blowup"}"#);
    let o = irregflow(&["norms", "--config", &cfg], dir.path(), None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("blowup"));
}

#[test]
fn reruns_are_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"select": {"candidates": 4, "samples": 3000}}"#);
    let run = |t: &str| {
        let out = dir.path().join(format!("t{t}"));
        let o = irregflow(&["select", "--config", &cfg, "--threads", t, "--out", out.to_str().unwrap()], dir.path(), None);
        assert!(o.status.success());
        std::fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}
