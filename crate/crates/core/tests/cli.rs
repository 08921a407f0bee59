use std::path::PathBuf;
use std::process::Command;

use summachine::cli::{run, EXIT_BOUND, EXIT_DISAGREE, EXIT_ERROR, EXIT_NEGATIVE, EXIT_OK};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}.sm", env!("CARGO_MANIFEST_DIR"))
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn sm(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("summachine").chain(args.iter().copied()), &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn json(r: &Run) -> serde_json::Value {
    serde_json::from_str(&r.out).unwrap_or_else(|e| panic!("{e}: {}", r.out))
}

#[test]
fn unfold_pingpong_stats_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("dot");
    let r = sm(&["unfold", &fixture("pingpong"), "--dot", dot.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("F1: 3 nodes, 1 cut-offs, 0 dead"));
    assert!(r.out.contains("F2: 3 nodes, 1 cut-offs, 0 dead"));
    assert!(r.out.contains("total: 6 nodes, 2 cut-offs, 0 dead"));
    let mut files: Vec<_> = std::fs::read_dir(&dot).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["F1.dot", "F2.dot"]);
}

#[test]
fn unfold_mismatch_warns_about_deadlock() {
    let r = sm(&["unfold", &fixture("mismatch")]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("2 dead"));
    assert!(r.err.contains("communication deadlock"), "{}", r.err);
}

#[test]
fn sequential_and_parallel_json_are_identical() {
    for name in ["pingpong", "chain3", "relay", "conflict"] {
        let seq = sm(&["unfold", &fixture(name), "--format", "json", "--mode", "sequential"]);
        let par = sm(&["unfold", &fixture(name), "--format", "json", "--mode", "parallel"]);
        assert_eq!(seq.out, par.out, "{name}");
        assert_eq!(sm(&["unfold", &fixture(name), "--mode", "both"]).code, EXIT_OK);
    }
}

#[test]
fn unfold_limit_exits_with_bound_code() {
    let r = sm(&["unfold", &fixture("pingpong"), "--max-nodes", "2"]);
    assert_eq!(r.code, EXIT_BOUND);
    assert!(r.err.contains("max_nodes"), "{}", r.err);
}

#[test]
fn stored_sum_machine_answers_queries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("async.json");
    let path = path.to_str().unwrap();
    assert_eq!(sm(&["unfold", &fixture("async"), "--out", path, "--seed", "11"]).code, EXIT_OK);
    let r = sm(&["reach", path, "--target", "F1=B", "--target", "F2=Y", "--format", "json"]);
    assert_eq!(r.code, EXIT_OK);
    let doc = json(&r);
    assert_eq!(doc["schema"], "summachine/v1");
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["witness"]["nodes"], serde_json::json!(["F1:B#0", "F2:Y#0"]));
}

#[test]
fn reach_exit_codes() {
    let r = sm(&["reach", &fixture("async"), "--query", r#"{"targets":{"F1":"B","F2":"Y"}}"#, "--trace"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("reachable: (B#0, Y#0)"), "{}", r.out);
    assert_eq!(sm(&["reach", &fixture("conflict"), "--target", "F1=B", "--target", "F2=Z"]).code, EXIT_NEGATIVE);
    let r = sm(&["reach", &fixture("conflict"), "--target", "F1=Q"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.contains("no state \"Q\""), "{}", r.err);
    assert_eq!(sm(&["reach", &fixture("conflict"), "--target", "F1"]).code, EXIT_ERROR);
}

#[test]
fn check_reports_queries_and_sizes() {
    let r = sm(&["check", &fixture("pingpong"), "--format", "json"]);
    assert_eq!(r.code, EXIT_OK);
    let doc = json(&r);
    assert_eq!(doc["queries"], 4);
    assert_eq!(doc["mismatches"], serde_json::json!([]));
    assert_eq!(doc["sizes"]["product_states"], 2);
    assert_eq!(doc["sizes"]["sum_nodes"], 6);
    assert_eq!(doc["bisimulation"]["classes"], 2);
    let r = sm(&["check", &fixture("conflict"), "--sample", "5", "--seed", "3"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("queries 5,"), "{}", r.out);
}

#[test]
fn check_on_truncated_oracle_exits_with_bound_code() {
    assert_eq!(sm(&["check", &fixture("chain3"), "--bound", "2"]).code, EXIT_BOUND);
}

#[test]
fn every_fixture_checks_clean() {
    for name in ["pingpong", "async", "conflict", "chain3", "relay", "stuck", "selfloop", "mismatch"] {
        assert_eq!(sm(&["check", &fixture(name)]).code, EXIT_OK, "{name}");
    }
}

#[test]
fn eval_local_and_global() {
    let r = sm(&["eval", &fixture("pingpong"), "--machine", "F1", r#"EF "B""#]);
    assert_eq!((r.code, r.out.trim()), (EXIT_OK, "true"));
    let r = sm(&["eval", &fixture("pingpong"), "--machine", "F1", "--node", "B#0", r#""B""#]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert_eq!(sm(&["eval", &fixture("pingpong"), "--machine", "F1", r#"AG EF "A""#, "--oracle"]).code, EXIT_OK);
    assert_eq!(
        sm(&["eval", &fixture("pingpong"), "--machine", "F1", "--node", "B#0", "true", "--oracle"]).code,
        EXIT_ERROR
    );
    let r = sm(&["eval", &fixture("conflict"), r#"conj-atoms F1:"B" F2:"Z""#, "--oracle"]);
    assert_eq!(r.code, EXIT_NEGATIVE);
    assert!(r.out.starts_with("false"));
    assert_eq!(sm(&["eval", &fixture("pingpong"), "--machine", "F1", "EF ("]).code, EXIT_ERROR);
}

#[test]
fn eval_reports_oracle_disagreement() {
    // the conjunction of local AX holds in the sum but not in the interleaved product
    let r = sm(&["eval", &fixture("async"), r#"conj-AX F1:"B" F2:"Y""#, "--oracle", "--format", "json"]);
    assert_eq!(r.code, EXIT_DISAGREE);
    let doc = json(&r);
    assert_eq!((doc["holds"].clone(), doc["oracle"].clone()), (true.into(), false.into()));
}

#[test]
fn gen_is_reproducible() {
    let a = sm(&["gen", "--seed", "42", "-n", "3", "-m", "4", "-d", "2"]);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.out, sm(&["gen", "--seed", "42", "-n", "3", "-m", "4", "-d", "2"]).out);
    assert!(a.out.contains("# sha256 d4b03e017f394e02e5e405de1fd8ea982a8f969a343d3be71571f58ed7674aba"));
    assert_ne!(a.out, sm(&["gen", "--seed", "43", "-n", "3", "-m", "4", "-d", "2"]).out);
}

#[test]
fn generated_file_carries_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.sm");
    let path = path.to_str().unwrap();
    assert_eq!(sm(&["gen", "--seed", "42", "-n", "3", "-m", "4", "-d", "2", "--out", path]).code, EXIT_OK);
    let r = sm(&["check", path, "--format", "json"]);
    assert_eq!(r.code, EXIT_OK);
    let doc = json(&r);
    assert_eq!(doc["seed"], 42);
    assert_eq!(doc["mismatches"], serde_json::json!([]));
}

#[test]
fn gen_edge_cases() {
    let r = sm(&["gen", "-n", "1", "-d", "0"]);
    assert_eq!(r.code, EXIT_OK);
    let spec = summachine::dsl::parse_system(&r.out).unwrap();
    assert_eq!(spec.len(), 1);
    let r = sm(&["gen", "-n", "2", "-d", "3"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.contains("coupling 3"), "{}", r.err);
    let r = sm(&["gen", "--seed", "1", "-n", "2", "-m", "2", "-d", "0"]);
    let spec = summachine::dsl::parse_system(&r.out).unwrap();
    assert!(spec.machines.iter().flat_map(|m| &m.transitions).all(|t| !t.action.is_sync()));
}

#[test]
fn deadlocks_lists_blocked_vectors() {
    let r = sm(&["deadlocks", &fixture("mismatch"), "--format", "json"]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(json(&r)["deadlocks"].as_array().unwrap().len(), 1);
    let r = sm(&["deadlocks", &fixture("pingpong")]);
    assert_eq!(r.code, EXIT_OK);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(sm(&["frobnicate"]).code, EXIT_ERROR);
    assert_eq!(sm(&["unfold", "/nonexistent/x.sm"]).code, EXIT_ERROR);
    assert_eq!(sm(&["--help"]).code, EXIT_OK);
}

#[test]
fn binary_honours_thread_cap() {
    let exe = PathBuf::from(env!("CARGO_BIN_EXE_summachine"));
    let output = Command::new(exe)
        .args(["unfold", &fixture("chain3"), "--mode", "parallel", "--format", "json"])
        .env("SUMMACHINE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(EXIT_OK));
    let seq = sm(&["unfold", &fixture("chain3"), "--format", "json"]);
    assert_eq!(String::from_utf8(output.stdout).unwrap(), seq.out);
}
