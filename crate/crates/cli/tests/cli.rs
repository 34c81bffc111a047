use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchlemma")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn info_reports_lambda() {
    let v = stdout_json(&run(&["info", "--formula", "(x1&x2)"]));
    assert_eq!(v["depth"], 1);
    assert_eq!(v["size"], 1);
    assert_eq!(v["lambda"], 32.0);
    let v = stdout_json(&run(&["info", "--formula", "((x1&x2)|(x3&x4))"]));
    assert_eq!((v["depth"].as_u64(), v["size"].as_u64()), (Some(2), Some(2)));
    assert_eq!(v["lambda"], 2048.0);
}

#[test]
fn parse_error_points_at_position() {
    let out = run(&["info", "--formula", "(x1 & x2"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert!(lines[0].contains("parse error"), "{err}");
    assert_eq!(lines[1], "  (x1 & x2");
    assert_eq!(lines[2], "          ^");
}

#[test]
fn formula_from_file_with_explicit_n() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.txt");
    std::fs::write(&path, "((x1 & x2) | ~x3)\n").unwrap();
    let v = stdout_json(&run(&["info", "--file", path.to_str().unwrap(), "--n", "7"]));
    assert_eq!(v["n_vars"], 7);
}

#[test]
fn cdt_constant_is_one_node() {
    let out = run(&["cdt", "--formula", "0"]);
    assert!(out.status.success());
    let dot = String::from_utf8(out.stdout).unwrap();
    assert_eq!(dot.matches("shape=").count(), 1);
    assert!(dot.contains("verified: true"));
}

#[test]
fn cdt_term_under_or_is_complete() {
    let v = stdout_json(&run(&["cdt", "--formula", "((x1 & x2 & x3) |)", "--format", "json"]));
    assert_eq!(v["verified"], true);
    assert_eq!(v["leaves"], 8);
    assert_eq!(v["depth"], 3);
}

#[test]
fn cdt_sampled_and_from_file_agree() {
    let f = "((x1 & ~x2) | (x3 & x4) | (x2 & x5))";
    let a = stdout_json(&run(&["cdt", "--formula", f, "--p", "0.0002", "--seed", "9", "--format", "json"]));
    assert_eq!(a["verified"], true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.json");
    std::fs::write(&path, a["restriction_tree"].to_string()).unwrap();
    let b = stdout_json(&run(&["cdt", "--formula", f, "--restriction-tree", path.to_str().unwrap(), "--format", "json"]));
    assert_eq!(a["tree"], b["tree"]);
}

#[test]
fn cdt_p_needs_seed() {
    assert!(!run(&["cdt", "--formula", "(x1 | x2)", "--p", "0.01"]).status.success());
}

#[test]
fn count_tautology() {
    let v = stdout_json(&run(&["count", "--formula", "(x1|~x1)", "--n", "1", "--seed", "0"]));
    assert_eq!(v["count"], 2);
    assert!(v["elapsed_ms"].is_number());
    assert_eq!(v["seed"], 0);
}

#[test]
fn randomized_commands_need_seed() {
    for cmd in ["switch", "lemma", "count", "sample"] {
        assert!(!run(&[cmd, "--formula", "(x1 | x2)"]).status.success(), "{cmd}");
    }
}

#[test]
fn switch_zero_p_passes() {
    let out = run(&["switch", "--formula", "((x1&x2)|(x3&~x4))", "--p", "0", "--trials", "200", "--seed", "1"]);
    let v = stdout_json(&out);
    for row in v["rows"].as_array().unwrap() {
        assert_eq!(row["successes"], 0);
        assert_eq!(row["verdict"], "pass");
    }
}

#[test]
fn output_independent_of_threads() {
    let args = ["lemma", "--formula", "((x1&x2)|(x3&~x4)|(x5&x6))", "--trials", "300", "--seed", "4", "--format", "csv"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.dot");
    let out = run(&["cdt", "--formula", "(x1 | x2)", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("digraph"));
}

#[test]
fn props_default_passes() {
    let v = stdout_json(&run(&["props", "--instances", "60"]));
    assert!(v.as_array().unwrap().iter().all(|r| r["counterexample"].is_null()));
}
