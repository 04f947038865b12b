use std::fs;
use std::process::{Command, Output};

fn era(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_era-lab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn figure1_exit_codes() {
    assert_eq!(era(&["scenario", "figure1", "--scheme", "ebr", "--n", "20"]).status.code(), Some(0));
    assert_eq!(era(&["scenario", "figure1", "--scheme", "hp", "--n", "20"]).status.code(), Some(2));
    assert_eq!(era(&["scenario", "figure1", "--scheme", "ibr", "--n", "20"]).status.code(), Some(2));
}

#[test]
fn trace_file_replays_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig2.trace");
    let p = path.to_str().unwrap();
    let first = era(&["scenario", "figure2", "--scheme", "hp", "--trace", p]);
    assert_eq!(first.status.code(), Some(2));
    let again = era(&["check", "--trace", p]);
    assert_eq!(again.status.code(), Some(2));
    let report = stdout(&first).replace(&format!("trace: {p}\n"), "");
    assert_eq!(report, stdout(&again));
}

#[test]
fn truncated_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    let p = path.to_str().unwrap();
    era(&["scenario", "figure1", "--scheme", "ebr", "--n", "4", "--trace", p]);
    let text = fs::read_to_string(&path).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    fs::write(&path, cut[..cut.len() / 2].join("\n")).unwrap();
    let o = era(&["check", "--trace", p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
}

#[test]
fn run_with_workload_and_schedule_files() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    let s = dir.path().join("s.txt");
    fs::write(&w, "T1: insert(1); contains(1)\nT2: delete(1)\n").unwrap();
    fs::write(&s, "@seed:7 @len:400").unwrap();
    let o = era(&["run", "--scheme", "ebr", "--workload", w.to_str().unwrap(), "--schedule", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("linearizable: yes"));
}

#[test]
fn bad_input_is_a_usage_error() {
    assert_eq!(era(&["scenario", "figure2", "--scheme", "ebr"]).status.code(), Some(1));
    assert_eq!(era(&["fuzz", "--scheme", "nope"]).status.code(), Some(1));
    assert_eq!(era(&["fuzz", "--seeds", "3"]).status.code(), Some(1));
    assert_eq!(era(&["scenario", "figure9"]).status.code(), Some(1));
    assert_eq!(era(&["--help"]).status.code(), Some(0));
}

#[test]
fn fuzz_summary() {
    let o = era(&["fuzz", "--scheme", "ebr", "--seeds", "0..50", "--threads", "3", "--ops", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("runs: 50"));
}
