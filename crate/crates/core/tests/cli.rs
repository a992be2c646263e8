//! End-to-end runs of the `effsynth` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn effsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effsynth")).args(args).output().expect("binary runs")
}

fn with_example(sub: &str, extra: &[&str]) -> Output {
    let mdp = fixture("example1.mdp");
    let dra = fixture("example1.hoa");
    let mut args = vec![sub, "--mdp", mdp.to_str().unwrap(), "--dra", dra.to_str().unwrap()];
    args.extend_from_slice(extra);
    effsynth(&args)
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn decompose_lists_components() {
    let v = json(&with_example("decompose", &[]));
    let p = &v["product"];
    assert_eq!(p["initial_in_region"], Value::Bool(true));
    assert_eq!(p["amecs"].as_array().unwrap().len(), 1);
    assert_eq!(p["maecs"].as_array().unwrap().len(), 1);
    assert_eq!(v["manifest"]["tool"], "effsynth");
    assert_eq!(v["manifest"]["inputs"]["mdp"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn synthesize_evaluate_simulate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for method in ["es", "ex"] {
        let v = json(&with_example("synthesize", &["--epsilon", "0.05", "--method", method, "--out", d]));
        assert_eq!(v["report"]["value"], 1.0);
        assert_eq!(v["report"]["certificate"]["accepted"], true);
        assert_eq!(v["manifest"]["knobs"]["method"], method);
    }
    let policy = dir.path().join("policy.txt");
    let text = fs::read_to_string(&policy).unwrap();
    assert!(text.lines().any(|l| l.starts_with("4@good a2")), "{text}");
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk["report"]["value"], 1.0);

    let p = policy.to_str().unwrap();
    let ev = json(&with_example("evaluate", &["--policy", p]));
    assert_eq!(ev["acceptance"]["verdict"], "almost-sure");
    assert!((ev["efficiency"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let v = json(&with_example(
            "simulate",
            &["--policy", p, "--steps", "2000", "--rollouts", "3", "--seed", "9", "--out", out.to_str().unwrap()],
        ));
        (v, out)
    };
    let (a, da) = run("sim_a");
    let (b, db) = run("sim_b");
    assert_eq!(a["mean_ratio"], b["mean_ratio"]);
    for f in ["stats.json", "rollouts.csv", "visits.csv"] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f} differs between runs");
    }
    assert!(fs::read_to_string(da.join("rollouts.csv")).unwrap().starts_with("rollout,ratio\n"));
    let mean = a["mean_ratio"].as_f64().unwrap();
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
}

#[test]
fn bad_parameters_exit_with_two() {
    assert_eq!(code(&with_example("synthesize", &["--epsilon", "0"])), 2);
    assert_eq!(code(&with_example("synthesize", &["--epsilon", "-1"])), 2);
    assert_eq!(code(&with_example("synthesize", &["--k-margin", "0"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("p.txt");
    fs::write(&policy, "1@idle a2 1\n2@idle a1 1\n3@bad a1 1\n4@good a2 1\n").unwrap();
    let p = policy.to_str().unwrap();
    assert_eq!(code(&with_example("simulate", &["--policy", p, "--rollouts", "0"])), 2);
    assert_eq!(code(&with_example("simulate", &["--policy", p, "--steps", "0"])), 2);
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mdp");
    fs::write(&bad, "states 1 2\nactions a\ninitial 1\ntrans 1 a 2 0.5\n").unwrap();
    let out = effsynth(&["decompose", "--mdp", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let missing = dir.path().join("nope.mdp");
    assert_eq!(code(&effsynth(&["decompose", "--mdp", missing.to_str().unwrap()])), 2);
    let out = effsynth(&["decompose", "--mdp", fixture("example1.mdp").to_str().unwrap(), "--dra", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unsatisfiable_task_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("example1.mdp")).unwrap().replace("label 4 g\n", "");
    let mdp = dir.path().join("nog.mdp");
    fs::write(&mdp, text).unwrap();
    let dra = fixture("example1.hoa");
    let out = effsynth(&["synthesize", "--mdp", mdp.to_str().unwrap(), "--dra", dra.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn case2_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&effsynth(&["casestudy", "case2", "--out", dir.path().to_str().unwrap()]));
    for f in ["model.txt", "task.hoa", "sweep.csv", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.lines().count() > 2);
    assert!(v.get("report").is_some(), "{v}");

    // The emitted model and automaton parse back through the ordinary inputs.
    let model = dir.path().join("model.txt");
    let task = dir.path().join("task.hoa");
    let d = json(&effsynth(&["decompose", "--mdp", model.to_str().unwrap(), "--dra", task.to_str().unwrap()]));
    assert_eq!(d["product"]["initial_in_region"], true);
}
