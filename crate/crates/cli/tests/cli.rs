use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn ergopt(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergopt"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// The last stderr line is the JSON mirror of the outcome.
fn outcome(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().expect("diagnostics")).unwrap()
}

#[test]
fn validate_passes_on_a_constant_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"map": {"inverse_branches": ["x/2", "(x+1)/2"], "lambda": 0.5}, "potential": {"g": "1"}}"#).unwrap();
    let o = ergopt(&["validate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/validate.json").exists());
    assert_eq!(outcome(&o)["status"], "pass");
}

#[test]
fn piecewise_on_doubling_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergopt(&["piecewise"], &config("doubling_identity.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&dir.path().join("piecewise.json"));
    assert_eq!(j["study"]["breakpoints"]["segment_words"], serde_json::json!(["|1"]));
    assert!(j["study"]["cross"]["sup_dual_lax"].as_f64().unwrap() <= 1e-4);
    assert_eq!(j["meta"]["anchors"]["omega_bar"], "|1");
    let csv = std::fs::read_to_string(dir.path().join("piecewise.csv")).unwrap();
    assert!(csv.starts_with("x,V_dual,V_lax,selected,ties,tie_tol,refine_tol"));
}

#[test]
fn orientation_reversing_piecewise_is_a_certified_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergopt(&["piecewise"], &config("minus_doubling_quadratic.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    let j = outcome(&o);
    assert_eq!(j["status"], "certified-failure");
    assert_eq!(j["command"], "piecewise");
    // the same map is fine for the primal side
    let o = ergopt(&["subaction"], &config("minus_doubling_quadratic.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tied_maximizers_refuse_the_dual_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergopt(&["piecewise"], &config("doubling_cosine.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"map": {"inverse_branches": ["x/2", "(x+1)/2"], "lambda": 0.5}, "potential": {"g": "x - 0.5"}}"#).unwrap();
    let o = ergopt(&["eigen"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(outcome(&o)["status"], "error");

    std::fs::write(&cfg, r#"{"map": {"inverse_branches": ["x/2"], "lambda": 0.5}, "potential": {"A": "x"}, "extra": 1}"#).unwrap();
    assert_eq!(ergopt(&["eigen"], &cfg, dir.path()).status.code(), Some(1));
    assert_eq!(ergopt(&["eigen"], &dir.path().join("missing.json"), dir.path()).status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("doubling_identity.json");
    let runs: Vec<PathBuf> = ["1", "4"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let out = dir.path().join(format!("r{i}"));
            let o = Command::new(env!("CARGO_BIN_EXE_ergopt"))
                .args(["dual", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .env("ERGOPT_THREADS", t)
                .output()
                .unwrap();
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for f in ["dual.json", "dual.csv"] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn kernel_and_mane_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("doubling_identity.json");
    let o = ergopt(&["kernel", "--omega", "0|1", "--x", "0.3"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ergopt(&["mane", "--x", "0", "--y", "0"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let j = read_json(&dir.path().join("mane.json"));
    assert!((j["s_xy"]["value"].as_f64().unwrap() + 1.0).abs() < 1e-12);
    let o = ergopt(&["kernel", "--omega", "2", "--x", "0.3"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn in_process_entry_point_matches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("doubling_identity.json");
    let code = ergopt_cli::main_with([
        "ergopt",
        "orbits",
        "--max-period",
        "4",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let j = read_json(&dir.path().join("orbits.json"));
    assert_eq!(j["count"], 8);
    assert_eq!(j["best"]["m"], 1.0);
}
