use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scl_core::runtime::{Phase, Trace};

fn scl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scl")).args(args).output().expect("spawn scl")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "run", "--scenario", "A,B", "--templates", "2", "--seeds", "2", "--runs", "1", "--out", out,
    ];
    args.extend_from_slice(extra);
    scl(&args)
}

fn first_trace(dir: &Path, system: &str) -> PathBuf {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join(system).join("traces"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths.remove(0)
}

#[test]
fn run_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--system", "all", "--cognition", "faulty"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    for system in ["scl", "no-mem", "no-control", "none"] {
        assert!(table.lines().any(|l| l.starts_with(system)), "missing row {system}");
    }
    for file in ["manifest.json", "suite.json", "report.json", "report.txt"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let trace = first_trace(dir.path(), "scl");
    assert_eq!(code(&scl(&["verify", trace.to_str().unwrap()])), 0);
    let replayed = scl(&["replay", trace.to_str().unwrap()]);
    assert_eq!(code(&replayed), 0);
    assert!(stdout(&replayed).ends_with("ok\n"));

    let report = scl(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    assert_eq!(stdout(&report), fs::read_to_string(dir.path().join("report.txt")).unwrap());
    assert_eq!(code(&scl(&["gate", dir.path().to_str().unwrap()])), 0);
}

#[test]
fn rerun_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(dir.path(), &[])), 0);
    let trace = first_trace(dir.path(), "scl");
    let before = fs::read(&trace).unwrap();
    let again = small_run(dir.path(), &[]);
    assert_eq!(code(&again), 0);
    assert_eq!(fs::read(&trace).unwrap(), before);
}

#[test]
fn different_flags_against_an_existing_run_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(dir.path(), &[])), 0);
    let out = small_run(dir.path(), &["--seed", "4"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("different manifest"));
}

#[test]
fn tampered_traces_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(dir.path(), &[])), 0);
    let trace = first_trace(dir.path(), "scl");
    let mut bytes = fs::read(&trace).unwrap();
    let second_line = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    bytes[second_line + 60] ^= 0x01;
    fs::write(&trace, &bytes).unwrap();

    let verify = scl(&["verify", trace.to_str().unwrap()]);
    assert_eq!(code(&verify), 2);
    assert!(String::from_utf8_lossy(&verify.stderr).contains("last good event 0"));
    assert_eq!(code(&scl(&["replay", trace.to_str().unwrap()])), 2);
    assert_eq!(code(&scl(&["report", dir.path().to_str().unwrap()])), 2);
    assert_eq!(code(&scl(&["gate", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn truncated_trace_names_last_good_event() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(dir.path(), &[])), 0);
    let trace = first_trace(dir.path(), "scl");
    let text = fs::read_to_string(&trace).unwrap();
    let kept: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    let cut = dir.path().join("cut.trace");
    fs::write(&cut, kept).unwrap();
    let out = scl(&["verify", cut.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("last good event 4"));
}

#[test]
fn unauthorized_execution_fails_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(dir.path(), &[])), 0);
    // rebuild a valid chain with every decide event removed
    let path = first_trace(dir.path(), "scl");
    let original = Trace::read_file(&path).unwrap();
    let mut forged = Trace::new();
    for e in original.events.iter().filter(|e| e.phase != Phase::Decide) {
        forged.push(&e.episode_id, e.cycle, e.phase, e.payload.clone());
    }
    forged.write_file(&path).unwrap();
    assert_eq!(code(&scl(&["verify", path.to_str().unwrap()])), 0);
    let gate = scl(&["gate", dir.path().to_str().unwrap()]);
    assert_eq!(code(&gate), 3);
    assert!(stdout(&gate).contains("FAIL 1 scl episodes fail the audit"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&scl(&["run", "--system", "bogus"])), 1);
    assert_eq!(code(&scl(&["run", "--fault-forget", "1.5"])), 1);
    assert_eq!(code(&scl(&["run", "--cities", "4"])), 1);
    assert_eq!(code(&scl(&["run", "--seeds", "0"])), 1);
    assert_eq!(code(&scl(&["frobnicate"])), 1);
    assert_eq!(code(&scl(&["--help"])), 0);
}

#[test]
fn generate_writes_one_file_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = scl(&[
        "generate", "--scenario", "A", "--templates", "3", "--seeds", "2", "--cities", "5", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    assert_eq!(names[0], "A5-t00-s00.json");

    let listed = scl(&["generate", "--scenario", "C", "--templates", "1", "--seeds", "3"]);
    assert_eq!(stdout(&listed).lines().count(), 3);
}
