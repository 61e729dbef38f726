use std::path::PathBuf;
use std::process::{Command, Output};

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn aggrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggrec"))
        .args(args)
        .current_dir(example(""))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn markov_query_prints_two_rows() {
    let o = aggrec(&[
        "run",
        "--program",
        "markov.dl",
        "--facts",
        "mov.csv",
        "--query",
        "fpop",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("fpop,\"a\",133333.33"), "{out}");
    assert!(rows[1].starts_with("fpop,\"b\",66666.66"), "{out}");
}

#[test]
fn kmeans_verify_passes() {
    let o = aggrec(&[
        "run",
        "--program",
        "kmeans.dl",
        "--facts",
        "points.csv",
        "--verify",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("engine==oracle: PASS"));
}

#[test]
fn aggregate_cycle_without_stage_exits_3() {
    let o = aggrec(&["run", "--program", "bad.dl"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("cycle reach -> reach"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn syntax_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.dl");
    std::fs::write(&p, "p(X) :- q(X\n").unwrap();
    let o = aggrec(&["run", "--program", p.to_str().unwrap(), "--all"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("syntax error at 2:"), "{}", stderr(&o));
}

#[test]
fn bad_fact_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.csv");
    std::fs::write(&f, "edge,a,b\nedge,1x,c\n").unwrap();
    let o = aggrec(&["run", "-p", "tc.dl", "-f", f.to_str().unwrap(), "-q", "tc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(aggrec(&["run"]).status.code(), Some(1));
    assert_eq!(
        aggrec(&["run", "-p", "tc.dl", "-f", "edges.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        aggrec(&["run", "-p", "tc.dl", "-q", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(aggrec(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_type_error_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.dl");
    std::fs::write(&p, "r(Z) :- q(X, Y), Z = X + Y.\n").unwrap();
    let f = dir.path().join("q.csv");
    std::fs::write(&f, "q,1,a\n").unwrap();
    let o = aggrec(&[
        "run",
        "-p",
        p.to_str().unwrap(),
        "-f",
        f.to_str().unwrap(),
        "-q",
        "r",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("rule 0"), "{}", stderr(&o));
}

#[test]
fn output_is_deterministic() {
    let args = [
        "run",
        "-p",
        "groupby_sum.dl",
        "-f",
        "pairs.csv",
        "--all",
        "--format",
        "table",
    ];
    let a = aggrec(&args);
    let b = aggrec(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("mean (2 rows)"));
}

#[test]
fn per_predicate_fact_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("edge.facts");
    std::fs::write(&f, "a\tb\nb c\n").unwrap();
    let o = aggrec(&[
        "run",
        "-p",
        "tc.dl",
        "--pred-facts",
        f.to_str().unwrap(),
        "-q",
        "tc",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn explain_strata_and_trace() {
    let o = aggrec(&[
        "run",
        "-p",
        "markov.dl",
        "-f",
        "mov.csv",
        "--explain-strata",
        "--trace",
        "-q",
        "finalstep",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("[staged on next/0]"), "{out}");
    assert!(out.contains("stage position 0, increment +1"), "{out}");
    assert!(
        stderr(&o).contains("stratum 0 stage 1: next=2"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn rewrite_mode_agrees() {
    let a = aggrec(&["run", "-p", "markov.dl", "-f", "mov.csv", "-q", "fpop"]);
    let b = aggrec(&[
        "run",
        "-p",
        "markov.dl",
        "-f",
        "mov.csv",
        "-q",
        "fpop",
        "--mode",
        "stratified-rewrite",
    ]);
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    assert_eq!(a.stdout, b.stdout);
}
