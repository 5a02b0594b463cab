use std::path::Path;
use std::process::{Command, Output};

fn lprg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lprg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_attack_gd() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.json");
    let public = dir.path().join("public.json");
    assert!(lprg(&["gen", "--n", "64", "--s", "1.4", "--seed", "5", "--out", path(&full)]).status.success());
    let o = lprg(&["gen", "--n", "64", "--s", "1.4", "--seed", "5", "--public", "--out", path(&public)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&full).unwrap();
    let inst = lprg::Instance::from_json(&text).unwrap();

    let o = lprg(&["attack-gd", path(&public), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let secret = lprg::prg::bits_from_str(rec["secret"].as_str().unwrap()).unwrap();
    assert_eq!(Some(secret), inst.planted_secret);
}

#[test]
fn attack_decode_on_public_instance() {
    let dir = tempfile::tempdir().unwrap();
    let public = dir.path().join("public.json");
    let trace = dir.path().join("trace.csv");
    assert!(lprg(&["gen", "--n", "128", "--s", "1.45", "--seed", "9", "--public", "--out", path(&public)]).status.success());
    let o = lprg(&["attack-decode", path(&public), "--l", "8", "--paths", "256", "--trace", path(&trace)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("outcome,secret,iterations,paths_tried,guesses,wall_ms"), "{out}");
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("iter,mean_abs_posterior,flipped_bits,satisfied_checks"));

    // Oracle mode needs the planted secret.
    let o = lprg(&["attack-decode", path(&public), "--l", "4", "--oracle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_decode_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    assert!(lprg(&["gen", "--n", "256", "--s", "1.1", "--out", path(&inst)]).status.success());
    let o = lprg(&["attack-decode", path(&inst), "--l", "0", "--iter-max", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("failed"));
}

#[test]
fn exhausted_gd_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    assert!(lprg(&["gen", "--n", "256", "--s", "1.3", "--public", "--out", path(&inst)]).status.success());
    let o = lprg(&["attack-gd", path(&inst), "--max-nodes", "3"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn estimate_csv() {
    let o = lprg(&["estimate", "--n", "512..2048", "--r", "80,128"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    // One row per seed length and bound.
    assert_eq!(lines.len(), 7, "{out}");
    assert_eq!(lines[0], "n,bound,s_limit_80,s_limit_128");
    assert!(lines[1].starts_with("512,new,1.07"));
    assert!(lines[6].starts_with("2048,prior,"));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(lprg(&["gen", "--n", "4", "--s", "1.0"]).status.code(), Some(2));
    assert_eq!(lprg(&["estimate", "--n", "512", "--r", "17"]).status.code(), Some(2));
    assert_eq!(lprg(&["estimate", "--n", "9..3"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 3}").unwrap();
    assert_ne!(lprg(&["attack-gd", path(&bad)]).status.code(), Some(0));
}

#[test]
fn experiment_writes_aggregates_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("avg.csv");
    let o = lprg(&["experiment", "--kind", "avg-guesses", "--n", "128", "--s", "1.45", "--trials", "5", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let agg = std::fs::read_to_string(&out).unwrap();
    assert_eq!(agg.lines().count(), 2);
    let trials = std::fs::read_to_string(dir.path().join("avg.trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 6);
}
