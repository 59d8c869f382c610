//! CLI integration tests: golden outputs on the fixture inputs, JSON-lines
//! format, exit codes, determinism, and error reporting.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct CliRun {
    code: i32,
    stdout: String,
    stderr: String,
}

fn pdb_raw(args: &[String]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_pdb"))
        .args(args)
        .output()
        .expect("run pdb");
    CliRun {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf8 stderr"),
    }
}

/// Arguments for a fixture directory: `--schema`, every `--data` csv, and
/// `--constraints`, followed by `extra`.
fn fixture_args(sub: &str, dir: &str, extra: &[&str]) -> Vec<String> {
    let root = fixtures_root().join(dir);
    let mut args: Vec<String> = vec![
        sub.to_string(),
        "--schema".into(),
        root.join("schema.txt").to_string_lossy().into_owned(),
        "--constraints".into(),
        root.join("constraints.txt").to_string_lossy().into_owned(),
    ];
    let mut entries: Vec<PathBuf> = fs::read_dir(&root)
        .expect("fixture dir")
        .map(|e| e.expect("entry").path())
        .collect();
    entries.sort();
    for path in entries {
        if path.extension().is_some_and(|e| e == "csv") {
            args.push("--data".into());
            args.push(path.to_string_lossy().into_owned());
        }
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn pdb(sub: &str, dir: &str, extra: &[&str]) -> CliRun {
    pdb_raw(&fixture_args(sub, dir, extra))
}

fn query_arg(dir: &str) -> String {
    fixtures_root()
        .join(dir)
        .join("query.txt")
        .to_string_lossy()
        .into_owned()
}

// ---------------------------------------------------------------------------
// golden outputs
// ---------------------------------------------------------------------------

#[test]
fn golden_check_outputs() {
    let cases: &[(&str, i32, &str)] = &[
        (
            "motivating_case1",
            1,
            "inconsistent\nviolation: edge {t1, t2}: 3/4 + 1/2 = 5/4 > 1\n",
        ),
        ("motivating_case2", 0, "consistent\n"),
        ("motivating_case3", 0, "consistent\n"),
        ("hypertree_person", 0, "consistent\n"),
        ("ring_consistent", 0, "consistent\n"),
        (
            "ring_inconsistent",
            1,
            "inconsistent\nviolation: ring over {t1, t2, t3, t4}: 5/2 - 4 + 2 = 1/2 > 0\n",
        ),
        ("joinfree_employee", 0, "consistent\n"),
        ("fd_person", 0, "consistent\n"),
    ];
    for (dir, code, stdout) in cases {
        let run = pdb("check", dir, &[]);
        assert_eq!(run.code, *code, "{dir}: stderr {}", run.stderr);
        assert_eq!(run.stdout, *stdout, "{dir}");
        assert!(run.stderr.is_empty(), "{dir}: unexpected stderr {}", run.stderr);
    }
}

#[test]
fn golden_query_outputs() {
    let q2 = query_arg("motivating_case2");
    let run = pdb("query", "motivating_case2", &["--query", &q2]);
    assert_eq!((run.code, run.stdout.as_str()), (0, "true\t1/2\t1/2\n"));

    let q3 = query_arg("motivating_case3");
    let run = pdb("query", "motivating_case3", &["--query", &q3]);
    assert_eq!((run.code, run.stdout.as_str()), (0, "true\t1/4\t1/2\n"));

    // Querying an inconsistent instance is an error on stderr, exit 1.
    let q1 = query_arg("motivating_case1");
    let run = pdb("query", "motivating_case1", &["--query", &q1]);
    assert_eq!(run.code, 1);
    assert!(run.stdout.is_empty());
    assert!(run.stderr.contains("inconsistent"), "stderr: {}", run.stderr);
}

#[test]
fn golden_hypergraph_output() {
    let run = pdb("hypergraph", "fd_person", &[]);
    assert_eq!(run.code, 0);
    let expected = "\
edge ic: t1, t3
edge ic: t1, t4
edge ic: t1, t5
edge ic: t2, t3
edge ic: t2, t4
edge ic: t2, t5
edge ic: t3, t5
edge ic: t4, t5
edge ic: t7, t9
edge ic: t8, t9
component 1 {t1, t2, t3, t4, t5}: complete multipartite, parts {t1, t2} {t3, t4} {t5}
component 2 {t6}: singleton
component 3 {t7, t8, t9}: hypertree
";
    assert_eq!(run.stdout, expected);
}

#[test]
fn certificate_worlds_form_a_model() {
    let run = pdb("check", "motivating_case2", &["--certificate"]);
    assert_eq!(run.code, 0);
    assert_eq!(
        run.stdout,
        "consistent\nworld {t1, t3}: 1/2\nworld {t2}: 1/2\n"
    );
}

// ---------------------------------------------------------------------------
// membership
// ---------------------------------------------------------------------------

#[test]
fn membership_thresholds() {
    let q3 = query_arg("motivating_case3");
    let base = ["--query", q3.as_str(), "--answer", ""];
    let run = pdb(
        "mp",
        "motivating_case3",
        &[&base[..], &["--k1", "1/4", "--k2", "1/2"]].concat(),
    );
    assert_eq!((run.code, run.stdout.as_str()), (0, "true\n"));
    let run = pdb(
        "mp",
        "motivating_case3",
        &[&base[..], &["--k1", "1/3", "--k2", "1/2"]].concat(),
    );
    assert_eq!((run.code, run.stdout.as_str()), (1, "false\n"));
    // An answer that is not produced at all is simply not a cautious answer.
    let run = pdb(
        "mp",
        "motivating_case3",
        &["--query", &q3, "--answer", "nope", "--k1", "0", "--k2", "1"],
    );
    assert_eq!((run.code, run.stdout.as_str()), (1, "false\n"));
}

// ---------------------------------------------------------------------------
// json-lines format
// ---------------------------------------------------------------------------

#[test]
fn json_lines_check_and_query() {
    let run = pdb("check", "motivating_case1", &["--format", "json-lines"]);
    assert_eq!(run.code, 1);
    let lines: Vec<serde_json::Value> = run
        .stdout
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid json"))
        .collect();
    assert_eq!(lines[0]["outcome"], "inconsistent");
    assert_eq!(lines[1]["outcome"], "inconsistent");
    assert!(lines[1]["detail"]
        .as_str()
        .unwrap()
        .contains("{t1, t2}"));

    let q3 = query_arg("motivating_case3");
    let run = pdb(
        "query",
        "motivating_case3",
        &["--query", &q3, "--format", "json-lines"],
    );
    assert_eq!(run.code, 0);
    let row: serde_json::Value = serde_json::from_str(run.stdout.trim()).expect("valid json");
    assert_eq!(row["answer"], serde_json::json!([]));
    assert_eq!(row["pmin"], "1/4");
    assert_eq!(row["pmax"], "1/2");
    assert_eq!(row["exact"], true);
}

// ---------------------------------------------------------------------------
// exit codes and error handling
// ---------------------------------------------------------------------------

#[test]
fn bad_input_exits_64_with_stderr_only() {
    // Missing file.
    let run = pdb_raw(&[
        "check".into(),
        "--schema".into(),
        "/nonexistent/schema.txt".into(),
        "--data".into(),
        "/nonexistent/R.csv".into(),
        "--constraints".into(),
        "/nonexistent/constraints.txt".into(),
    ]);
    assert_eq!(run.code, 64);
    assert!(run.stdout.is_empty());
    assert!(!run.stderr.is_empty());

    // Zero world budget is rejected.
    let run = pdb("check", "motivating_case2", &["--budget", "0"]);
    assert_eq!(run.code, 64);
    assert!(run.stdout.is_empty());
    assert!(!run.stderr.is_empty());
}

#[test]
fn exhausted_budget_reports_unknown() {
    // The cyclic counterexample needs the LP oracle over 9 tuples; a budget
    // of 4 worlds of tuples cannot decide it.
    let run = pdb("check", "cyclic_counterexample", &["--budget", "4"]);
    assert_eq!(run.code, 2, "stdout: {} stderr: {}", run.stdout, run.stderr);
    assert!(run.stdout.starts_with("unknown"));
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

#[test]
fn repeated_runs_are_byte_identical() {
    let q3 = query_arg("motivating_case3");
    let commands: Vec<Vec<String>> = vec![
        fixture_args("check", "fd_person", &["--explain"]),
        fixture_args("hypergraph", "fd_person", &[]),
        fixture_args("check", "motivating_case2", &["--certificate"]),
        fixture_args("query", "motivating_case3", &["--query", &q3]),
        fixture_args("hypergraph", "cyclic_counterexample", &[]),
    ];
    for args in commands {
        let a = pdb_raw(&args);
        let b = pdb_raw(&args);
        assert_eq!(a.code, b.code, "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.stderr, b.stderr, "{args:?}");
    }
}
