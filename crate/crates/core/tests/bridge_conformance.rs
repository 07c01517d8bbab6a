//! Conformance of the external-process bridge against the reference stub.

use std::time::Duration;

use explabox::bridge::{spawn_external, BackendKind, BridgeError, Predictor};
use explabox::expose::{security_fuzz, Verdict};
use explabox::ingest::Task;

const STUB: &str = env!("CARGO_BIN_EXE_explabox-stub-model");
const SHORT: Duration = Duration::from_millis(800);

fn labels() -> Vec<String> {
    vec!["neg".into(), "pos".into()]
}

fn stub(mode: &str, extra: &[&str]) -> Vec<String> {
    let mut argv = vec![STUB.to_owned(), mode.to_owned()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    argv
}

fn spawn(mode: &str) -> Predictor {
    spawn_external(&stub(mode, &[]), Some(Task::Classification), Some(&labels()), Duration::from_secs(10))
        .expect("stub spawns")
}

fn texts(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn handshake_and_prediction() {
    let p = spawn("labels");
    assert_eq!(p.task(), Task::Classification);
    assert_eq!(p.labels(), labels().as_slice());
    assert_eq!(p.kind(), BackendKind::ExternalProcess);
    let batch = p.predict(&texts(&["good", "bad", "meh"])).unwrap();
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let expected = [sigmoid(1.0), sigmoid(-1.0), 0.5];
    for (row, e) in batch.outputs.iter().zip(expected) {
        assert!((row[1] - e).abs() < 1e-12);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
    }
    assert!(p.probe_health().alive);
}

#[test]
fn batch_permutation_and_cache() {
    let p = spawn("labels");
    let a = p.predict(&texts(&["good good", "bad", "x"])).unwrap();
    let calls = p.backend_calls();
    let b = p.predict(&texts(&["x", "good good", "bad"])).unwrap();
    assert_eq!(p.backend_calls(), calls, "second batch is served from the cache");
    assert_eq!(b.outputs, vec![a.outputs[2].clone(), a.outputs[0].clone(), a.outputs[1].clone()]);
    assert_eq!(p.probe_health().cache_size, 3);
}

#[test]
fn regression_handshake() {
    let p = spawn_external(&stub("regression", &[]), Some(Task::Regression), None, SHORT).unwrap();
    assert_eq!(p.task(), Task::Regression);
    let out = p.predict(&texts(&["good good bad"])).unwrap();
    assert_eq!(out.outputs, vec![vec![1.0]]);
}

#[test]
fn label_mismatch_is_rejected() {
    let argv = stub("labels", &["a", "b", "c"]);
    let err = spawn_external(&argv, Some(Task::Classification), Some(&labels()), SHORT).err().unwrap();
    assert!(matches!(err, BridgeError::LabelMismatch { .. }), "{err:?}");
}

#[test]
fn task_mismatch_is_rejected() {
    let err = spawn_external(&stub("regression", &[]), Some(Task::Classification), Some(&labels()), SHORT)
        .err()
        .unwrap();
    assert!(matches!(err, BridgeError::TaskMismatch { .. }), "{err:?}");
}

#[test]
fn missing_handshake_times_out() {
    let err = spawn_external(&stub("no-handshake", &[]), None, None, SHORT).err().unwrap();
    assert!(matches!(err, BridgeError::HandshakeTimeout(_)), "{err:?}");
}

#[test]
fn spawn_failure() {
    let err = spawn_external(&["/nonexistent/model-binary".to_owned()], None, None, SHORT).err().unwrap();
    assert!(matches!(err, BridgeError::Spawn(_)), "{err:?}");
}

#[test]
fn backend_error_reply() {
    let p = spawn("error-on");
    let err = p.predict(&texts(&["fine", "ERR here"])).unwrap_err();
    assert!(matches!(err, BridgeError::Backend(_)), "{err:?}");
    assert!(p.probe_health().alive, "an error reply does not kill the backend");
    assert!(p.predict(&texts(&["fine"])).is_ok());
}

#[test]
fn wrong_arity_is_invalid_output() {
    let p = spawn("wrong-arity");
    let err = p.predict(&texts(&["a", "b"])).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidOutput(_)), "{err:?}");
}

#[test]
fn bad_distribution_is_invalid_output() {
    let p = spawn("bad-distribution");
    let err = p.predict(&texts(&["a"])).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidOutput(_)), "{err:?}");
}

#[test]
fn hang_times_out_and_marks_dead() {
    let p = spawn_external(&stub("hang", &[]), Some(Task::Classification), Some(&labels()), SHORT).unwrap();
    let err = p.predict(&texts(&["a"])).unwrap_err();
    assert!(matches!(err, BridgeError::Timeout(_)), "{err:?}");
    assert!(!p.probe_health().alive);
}

#[test]
fn crash_is_classified_and_restart_recovers() {
    let p = spawn("crash-on-empty");
    let err = p.predict(&texts(&[""])).unwrap_err();
    assert!(matches!(err, BridgeError::Crash(_)), "{err:?}");
    assert!(!p.probe_health().alive);
    p.restart().unwrap();
    assert!(p.predict(&texts(&["good"])).is_ok());
}

#[test]
fn nondeterminism_is_flagged() {
    let p = spawn("flaky");
    let flagged = p.check_determinism(&texts(&["same text"])).unwrap();
    assert_eq!(flagged, texts(&["same text"]));
    let stable = spawn("labels");
    assert!(stable.check_determinism(&texts(&["same text"])).unwrap().is_empty());
}

#[test]
fn fuzz_against_crashing_stub() {
    let p = spawn("crash-on-empty");
    let result = security_fuzz(&p);
    assert_eq!(result.n_inputs, result.cases.len());
    let crashes: Vec<_> = result.cases.iter().filter(|c| c.verdict == Verdict::Crash).collect();
    assert_eq!(crashes.len(), 1);
    assert_eq!(crashes[0].name, "empty");
    assert_eq!(result.n_failures, 1);
}
