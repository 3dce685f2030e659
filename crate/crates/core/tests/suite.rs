use std::fs;

use scl_core::runtime::{CognitionKind, System};
use scl_core::scenarios::Scenario;
use scl_core::suite::{load_run, rescore, run_suite, trace_path, RunManifest, SuiteConfig, SuiteError};
use scl_core::FaultModel;

fn small() -> SuiteConfig {
    SuiteConfig {
        scenarios: vec![Scenario::A, Scenario::B],
        templates: 3,
        seeds: 2,
        runs: 2,
        systems: vec![System::Scl, System::None],
        cognition: CognitionKind::Faulty,
        fault_model: FaultModel::default(),
        ..SuiteConfig::default()
    }
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for system in ["scl", "none"] {
        let traces = dir.join(system).join("traces");
        for entry in fs::read_dir(&traces).unwrap() {
            let path = entry.unwrap().path();
            files.push((path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()));
        }
    }
    files.sort();
    files
}

#[test]
fn same_manifest_gives_identical_trace_files() {
    let (manifest, _) = RunManifest::build(small()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_suite(&manifest, Some(a.path())).unwrap();
    let rb = run_suite(&manifest, Some(b.path())).unwrap();
    assert_eq!(ra.trace_hashes, rb.trace_hashes);
    assert_eq!(read_all(a.path()), read_all(b.path()));
    assert_eq!(ra.trace_hashes.len(), 3 * 2 * 2 * 2 * 2);
    assert_eq!(fs::read(a.path().join("report.txt")).unwrap(), fs::read(b.path().join("report.txt")).unwrap());
}

#[test]
fn rerun_reuses_traces_and_keeps_hashes() {
    let (manifest, _) = RunManifest::build(small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_suite(&manifest, Some(dir.path())).unwrap();
    let before = read_all(dir.path());
    let second = run_suite(&manifest, Some(dir.path())).unwrap();
    assert_eq!(first.trace_hashes, second.trace_hashes);
    assert_eq!(before, read_all(dir.path()));
}

#[test]
fn interrupted_run_resumes() {
    let (manifest, specs) = RunManifest::build(small()).unwrap();
    let full = tempfile::tempdir().unwrap();
    let expected = run_suite(&manifest, Some(full.path())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_suite(&manifest, Some(dir.path())).unwrap();
    // a truncated trace lacks its terminate event and is run again
    let path = trace_path(dir.path(), System::Scl, &format!("{}-r0", specs[0].key));
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(3).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let resumed = run_suite(&manifest, Some(dir.path())).unwrap();
    assert_eq!(resumed.trace_hashes, expected.trace_hashes);
}

#[test]
fn different_manifest_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = RunManifest::build(small()).unwrap();
    run_suite(&manifest, Some(dir.path())).unwrap();
    let (other, _) = RunManifest::build(SuiteConfig {
        global_seed: 9,
        ..small()
    })
    .unwrap();
    assert!(matches!(run_suite(&other, Some(dir.path())), Err(SuiteError::ManifestMismatch(_))));
}

#[test]
fn empty_suites_are_errors() {
    let zero_seeds = SuiteConfig { seeds: 0, ..small() };
    assert!(matches!(RunManifest::build(zero_seeds), Err(SuiteError::Empty { .. })));
    let zero_runs = SuiteConfig { runs: 0, ..small() };
    assert!(matches!(RunManifest::build(zero_runs), Err(SuiteError::NoRuns)));
}

#[test]
fn rescore_matches_the_run_and_catches_tampering() {
    let (manifest, specs) = RunManifest::build(small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = run_suite(&manifest, Some(dir.path())).unwrap();
    let again = rescore(dir.path()).unwrap();
    assert_eq!(again.trace_hashes, run.trace_hashes);
    assert_eq!(again.report.to_text(), run.report.to_text());
    let (_, _, episodes) = load_run(dir.path()).unwrap();
    assert_eq!(episodes.len(), run.scores.len());

    let path = trace_path(dir.path(), System::None, &format!("{}-r1", specs[2].key));
    let mut bytes = fs::read(&path).unwrap();
    let pos = bytes.iter().position(|&b| b == b'\n').unwrap() + 40;
    bytes[pos] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    match rescore(dir.path()) {
        Err(SuiteError::Tampered { source, .. }) => assert_eq!(source.index(), Some(1)),
        other => panic!("expected tamper error, got {other:?}"),
    }
}
