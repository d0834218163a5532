use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use scriptorium::core::{ClassSpace, Document, Origin};
use scriptorium::lf::{apply_all, apply_column, ApplyOptions, LabelingFunction, LfBody, ScriptHandle};
use scriptorium::runner::{dry_run, CallError, RunnerRegistry, RunnerSession};
use scriptorium::Error;

const SCRIPT: &str = r#"
import sys, time

def label_comment(text):
    if text == "boom":
        raise ValueError("boom")
    if text == "sleep":
        time.sleep(30)
    if text == "exit":
        sys.exit(3)
    if text == "seven":
        return 7
    if text == "abstain":
        return -1
    return len(text) % 2
"#;

fn python() -> Option<Vec<String>> {
    let ok = Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok {
        eprintln!("python3 not found; skipping runner protocol test");
        return None;
    }
    let runner = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/support/fake_runner.py");
    Some(vec!["python3".into(), "-u".into(), runner.display().to_string()])
}

fn write_script(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("lf.py");
    std::fs::write(&path, body).unwrap();
    path
}

fn script_lf(path: &Path) -> LabelingFunction {
    LabelingFunction {
        name: "script_lf".into(),
        source: Origin::Human,
        strategy_tag: None,
        provenance: None,
        body: LfBody::Script(ScriptHandle {
            path: path.to_path_buf(),
            entrypoint: "label_comment".into(),
            runtime_id: "python".into(),
        }),
    }
}

fn options(command: Vec<String>, timeout: Duration) -> ApplyOptions {
    let mut runners = RunnerRegistry::new();
    runners.register("python", command);
    ApplyOptions { runners, timeout }
}

fn docs(texts: &[&str]) -> Vec<Document> {
    texts.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), *t, None)).collect()
}

#[test]
fn handshake_then_labels() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let mut session = RunnerSession::start(&cmd, &script, "label_comment", 2, Duration::from_secs(5)).unwrap();
    assert_eq!(session.call("a", "ab"), Ok(0));
    assert_eq!(session.call("b", "abc"), Ok(1));
    assert_eq!(session.call("c", "abstain"), Ok(-1));
    assert_eq!(session.close(), Some(0));
}

#[test]
fn handshake_rejects_missing_entrypoint() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "def something_else(text):\n    return 0\n");
    let err = dry_run(&cmd, &script, "label_comment", 2, Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, Error::Handshake(ref m) if m.contains("KeyError")), "{err}");
}

#[test]
fn handshake_rejects_broken_script() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "def label_comment(text)\n    return 0\n");
    let err = dry_run(&cmd, &script, "label_comment", 2, Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, Error::Handshake(ref m) if m.contains("SyntaxError")), "{err}");
}

#[test]
fn unlaunchable_runner_is_a_handshake_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let cmd = vec!["/nonexistent/runner-binary".to_string()];
    let err = dry_run(&cmd, &script, "label_comment", 2, Duration::from_secs(1)).unwrap_err();
    assert!(matches!(err, Error::Handshake(_)));
}

#[test]
fn script_exception_is_reported_and_session_survives() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let mut session = RunnerSession::start(&cmd, &script, "label_comment", 2, Duration::from_secs(5)).unwrap();
    match session.call("x", "boom") {
        Err(CallError::Script(m)) => assert!(m.contains("ValueError"), "{m}"),
        other => panic!("expected script error, got {other:?}"),
    }
    assert_eq!(session.call("y", "a"), Ok(1));
}

#[test]
fn thousand_requests_keep_ids_paired() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let mut session = RunnerSession::start(&cmd, &script, "label_comment", 2, Duration::from_secs(5)).unwrap();
    for i in 0..1000 {
        let text = "x".repeat(i % 7 + 1);
        assert_eq!(session.call(&format!("req-{i}"), &text), Ok((text.len() % 2) as i64), "request {i}");
    }
}

#[test]
fn errors_become_tallied_abstains_and_runner_restarts() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let lf = script_lf(&script);
    let docs = docs(&["ab", "boom", "abc", "sleep", "a", "exit", "abcd", "seven", "abstain", "xyz"]);
    let started = Instant::now();
    let (votes, tally) = apply_column(&lf, &docs, 2, &options(cmd, Duration::from_millis(1500))).unwrap();
    assert_eq!(votes, vec![0, -1, 1, -1, 1, -1, 0, -1, -1, 1]);
    assert_eq!(tally.crash, 2, "{tally:?}");
    assert_eq!(tally.timeout, 1);
    assert_eq!(tally.out_of_range, 1);
    assert_eq!(tally.protocol, 0);
    assert_eq!(tally.launch, 0);
    assert_eq!(tally.total(), 4);
    assert!(started.elapsed() < Duration::from_secs(20));
}

#[test]
fn launch_failure_abstains_on_everything() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "raise RuntimeError('import time failure')\n");
    let lf = script_lf(&script);
    let docs = docs(&["a", "b", "c"]);
    let (votes, tally) = apply_column(&lf, &docs, 2, &options(cmd, Duration::from_secs(5))).unwrap();
    assert_eq!(votes, vec![-1, -1, -1]);
    assert_eq!(tally.launch, 3);
}

#[test]
fn script_and_rule_lfs_mix_in_one_matrix() {
    let Some(cmd) = python() else { return };
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let rule: LabelingFunction =
        serde_json::from_str(r#"{"name": "kw", "rules": [{"if": {"keyword_any": ["a"]}, "emit": 1}], "default": -1}"#)
            .unwrap();
    let classes = ClassSpace::new(vec!["ham".into(), "spam".into()], None, None).unwrap();
    let docs = docs(&["ab", "xyz", "zz"]);
    let applied =
        apply_all(&[rule, script_lf(&script)], &docs, &classes, &options(cmd, Duration::from_secs(5))).unwrap();
    assert_eq!(applied.matrix.m(), 2);
    assert_eq!(applied.matrix.row(0), &[1, 0]);
    assert_eq!(applied.matrix.row(1), &[-1, 1]);
    assert_eq!(applied.matrix.row(2), &[-1, 0]);
}

#[test]
fn unregistered_runtime_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), SCRIPT);
    let classes = ClassSpace::new(vec!["ham".into(), "spam".into()], None, None).unwrap();
    let opts = ApplyOptions { runners: RunnerRegistry::new(), timeout: Duration::from_secs(1) };
    let err = apply_all(&[script_lf(&script)], &docs(&["a"]), &classes, &opts).unwrap_err();
    assert!(matches!(err, Error::UnknownRunner(ref id) if id == "python"));
}
