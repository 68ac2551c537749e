//! Black-box checks of the command-line contract: exit codes, the report
//! schema, byte-level determinism of reports, and the NDJSON realization
//! stream. Every test drives the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const T1: &str = r#"{
    "voters": ["v1", "v2", "v3"],
    "atoms": [{"id": "a", "cost": 1}, {"id": "b", "cost": 1}, {"id": "c", "cost": 1}],
    "budget": 2,
    "comparison_set": [[], ["a"], ["b"], ["c"]],
    "preferences": {
        "kind": "top-element-ranking",
        "rankings": {"v1": ["a", "b", "c"], "v2": ["b", "c", "a"], "v3": ["c", "a", "b"]}
    }
}"#;

fn corelot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corelot")).args(args).output().expect("binary runs")
}

fn fixture(dir: &Path) -> PathBuf {
    let path = dir.join("t1.json");
    fs::write(&path, T1).expect("fixture writes");
    path
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn identical_runs_emit_byte_identical_reports() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let t1 = t1.to_str().expect("utf8 path");

    let first = corelot(&["solve", "--seed", "7", t1]);
    let second = corelot(&["solve", "--seed", "7", t1]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout, "same run, different bytes");

    let reseeded = corelot(&["solve", "--seed", "8", t1]);
    assert_ne!(first.stdout, reseeded.stdout, "seed is part of the report");

    let draws_a = dir.path().join("a.ndjson");
    let draws_b = dir.path().join("b.ndjson");
    let lottery = |out: &Path| {
        corelot(&[
            "lottery",
            "--alpha",
            "1",
            "--tau",
            "0.45",
            "--trials",
            "150",
            "--seed",
            "3",
            "--out",
            out.to_str().expect("utf8 path"),
            t1,
        ])
    };
    assert_eq!(lottery(&draws_a).status.code(), Some(0));
    assert_eq!(lottery(&draws_b).status.code(), Some(0));
    assert_eq!(
        fs::read(&draws_a).expect("stream a"),
        fs::read(&draws_b).expect("stream b"),
        "same seed, different realization stream"
    );
}

#[test]
fn solve_report_carries_the_default_certification() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let out = corelot(&["solve", t1.to_str().expect("utf8 path")]);
    assert_eq!(out.status.code(), Some(0));

    let report = stdout_json(&out);
    assert_eq!(report["command"], "solve");
    assert_eq!(report["config"]["variant"], "v2");
    assert!(report.get("timing_ms").is_none(), "timings are opt-in");

    let (lambda, gamma) = corelot::iterative::v2_levels(2.88, 4.88);
    let expected = corelot::iterative::ratio_f(lambda, gamma, 4.6).expect("ratio evaluates");
    let result = &report["results"][0];
    assert_eq!(result["certified_ratio"].as_f64(), Some(expected));
    let cost = result["cost"].as_f64().expect("cost");
    let budget = result["budget"].as_f64().expect("budget");
    assert!(cost <= budget);
    let checks = report["checks"].as_array().expect("checks array");
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["pass"] == Value::Bool(true)));
}

#[test]
fn timing_field_appears_only_on_request() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let timed = corelot(&["solve", "--timings", t1.to_str().expect("utf8 path")]);
    assert_eq!(timed.status.code(), Some(0));
    assert!(stdout_json(&timed).get("timing_ms").is_some());
}

#[test]
fn verify_exit_code_tracks_the_check_outcome() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let t1 = t1.to_str().expect("utf8 path");
    let outcome = r#"{"atoms": ["a", "b"]}"#;

    let pass = corelot(&["verify", "--gamma", "1", "--outcome", outcome, t1]);
    assert_eq!(pass.status.code(), Some(0));
    let report = stdout_json(&pass);
    let needed = report["results"][0]["worst_gamma_needed"].as_f64().expect("level reported");
    assert!((needed - 2.0 / 3.0).abs() <= 1e-12);

    let fail = corelot(&["verify", "--gamma", "0.5", "--outcome", outcome, t1]);
    assert_eq!(fail.status.code(), Some(3));
    let report = stdout_json(&fail);
    assert!(report["checks"]
        .as_array()
        .expect("checks array")
        .iter()
        .any(|c| c["pass"] == Value::Bool(false)));

    let lp = corelot(&["verify", "--check", "lp", "--alpha", "1", t1]);
    assert_eq!(lp.status.code(), Some(0));

    let coverage = corelot(&[
        "verify", "--check", "coverage", "--alpha", "1", "--tau", "0.45", "--trials", "300", t1,
    ]);
    assert_eq!(coverage.status.code(), Some(0));
}

#[test]
fn configuration_mistakes_exit_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let t1 = t1.to_str().expect("utf8 path");

    let missing = corelot(&["solve", "no-such-file.json"]);
    assert_eq!(missing.status.code(), Some(2));

    let too_few = corelot(&["lottery", "--trials", "50", t1]);
    assert_eq!(too_few.status.code(), Some(2));

    let unknown_flag = corelot(&["solve", "--frobnicate", t1]);
    assert_eq!(unknown_flag.status.code(), Some(2));

    let no_outcome = corelot(&["verify", "--gamma", "1", t1]);
    assert_eq!(no_outcome.status.code(), Some(2));

    let bad_outcome = corelot(&["verify", "--gamma", "1", "--outcome", "{", t1]);
    assert_eq!(bad_outcome.status.code(), Some(2));

    let bad_alpha = corelot(&["lottery", "--alpha", "-1", t1]);
    assert_eq!(bad_alpha.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(corelot(&["--help"]).status.code(), Some(0));
    assert_eq!(corelot(&["--version"]).status.code(), Some(0));
    assert_eq!(corelot(&["solve", "--help"]).status.code(), Some(0));
}

#[test]
fn lottery_streams_realizations_and_summarizes_coverage() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let draws = dir.path().join("draws.ndjson");
    let out = corelot(&[
        "lottery",
        "--alpha",
        "1",
        "--tau",
        "0.45",
        "--trials",
        "200",
        "--seed",
        "3",
        "--out",
        draws.to_str().expect("utf8 path"),
        t1.to_str().expect("utf8 path"),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let body = fs::read_to_string(&draws).expect("stream written");
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 200);
    for (t, line) in lines.iter().enumerate() {
        let row: Value = serde_json::from_str(line).expect("realization is JSON");
        assert_eq!(row["trial"].as_u64(), Some(t as u64));
        assert!(row["outcome"].is_array());
        assert!(row["covered"].is_array());
        assert!(row["cost"].as_f64().expect("cost") <= 2.0);
    }

    let report = stdout_json(&out);
    let checks = report["checks"].as_array().expect("checks array");
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().expect("name")).collect();
    assert!(names.contains(&"coverage") && names.contains(&"budget"));
    assert!(checks.iter().all(|c| c["pass"] == Value::Bool(true)));
}

#[test]
fn lottery_without_a_file_interleaves_stream_and_report() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let out = corelot(&[
        "lottery",
        "--alpha",
        "1",
        "--tau",
        "0.45",
        "--trials",
        "120",
        t1.to_str().expect("utf8 path"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).expect("utf8 stdout");
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 120, "stream plus report expected");
    for line in &lines[..120] {
        let _: Value = serde_json::from_str(line).expect("realization is JSON");
    }
    let report: Value =
        serde_json::from_str(&lines[120..].join("\n")).expect("trailing report is JSON");
    assert_eq!(report["command"], "lottery");
}

#[test]
fn lp_dump_prints_the_program_text() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let out = corelot(&["lp", "dump", "--alpha", "1", t1.to_str().expect("utf8 path")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).expect("utf8 stdout");
    assert!(text.contains("alpha = 1"));
    assert!(text.contains("budget"));

    let solved = corelot(&["lp", "solve", "--alpha", "1", t1.to_str().expect("utf8 path")]);
    assert_eq!(solved.status.code(), Some(0));
    let report = stdout_json(&solved);
    assert!(report["results"][0]["max_violation"].as_f64().expect("violation") <= 1e-7);
}

#[test]
fn leo_iterate_logs_a_residual_trajectory() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let out =
        corelot(&["leo-iterate", "--alpha", "1", "--steps", "50", t1.to_str().expect("utf8 path")]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    let result = &report["results"][0];
    assert!(result["steps"].as_u64().expect("steps") >= 1);
    assert!(result["final"]["r1"].is_number());
    assert!(result["trajectory"].is_array());
}

#[test]
fn gen_emits_loadable_instances() {
    let pb = corelot(&[
        "gen",
        "--kind",
        "pb",
        "--voters",
        "6",
        "--projects",
        "5",
        "--max-cost",
        "4",
        "--seed",
        "1",
    ]);
    assert_eq!(pb.status.code(), Some(0));
    let text = String::from_utf8(pb.stdout).expect("utf8 stdout");
    let inst = corelot::load_instance(&text).expect("generated instance loads");
    assert_eq!(inst.n(), 6);
    assert_eq!(inst.comparison_set().len(), 6);

    let clustering = corelot(&[
        "gen",
        "--kind",
        "clustering",
        "--points",
        "8",
        "--centers",
        "5",
        "--k",
        "3",
        "--seed",
        "2",
    ]);
    assert_eq!(clustering.status.code(), Some(0));
    let text = String::from_utf8(clustering.stdout).expect("utf8 stdout");
    let inst = corelot::load_instance(&text).expect("generated instance loads");
    assert_eq!(inst.budget(), 3.0);
}

#[test]
fn bench_aggregates_seeded_runs() {
    let dir = tempfile::tempdir().expect("tempdir");
    let t1 = fixture(dir.path());
    let out = corelot(&["bench", "--seeds", "5", t1.to_str().expect("utf8 path")]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["results"][0]["runs"].as_u64(), Some(5));
    assert_eq!(report["results"][0]["passes"].as_u64(), Some(5));
    assert_eq!(report["results"][1]["runs"].as_array().expect("rows").len(), 5);
    assert_eq!(report["checks"][0]["name"], "bench-core");
}
