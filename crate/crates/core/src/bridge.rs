//! Uniform black-box prediction interface.
//!
//! A [`Predictor`] wraps a [`Backend`] (an external process speaking the JSON
//! lines protocol, the built-in naive Bayes baseline, or any in-process model)
//! and adds batching, output validation and memoization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ingest::{tokenize, Dataset, Gold, Task};
use crate::par::Exec;
use crate::rng::{sha256_hex, text_key};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const PROTOCOL_VERSION: u64 = 1;

/// Tolerance on the sum of a classification probability row.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BridgeError {
    #[error("failed to spawn backend: {0}")]
    Spawn(String),

    #[error("handshake failed: {0}")]
    Handshake(String),

    #[error("handshake timed out after {0:?}")]
    HandshakeTimeout(Duration),

    #[error("handshake label mismatch: backend reports {backend:?}, expected {expected:?}")]
    LabelMismatch {
        backend: Vec<String>,
        expected: Vec<String>,
    },

    #[error("task mismatch: backend is {backend}, expected {expected}")]
    TaskMismatch { backend: String, expected: String },

    #[error("backend crashed: {0}")]
    Crash(String),

    #[error("backend timed out after {0:?}")]
    Timeout(Duration),

    #[error("invalid backend output: {0}")]
    InvalidOutput(String),

    #[error("backend reported an error: {0}")]
    Backend(String),

    #[error("backend is not alive")]
    NotAlive,

    #[error("baseline training failed: {0}")]
    Training(String),
}

impl BridgeError {
    /// Whether the backend process is gone and must be restarted.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BridgeError::Crash(_) | BridgeError::Timeout(_) | BridgeError::NotAlive)
    }
}

type Result<T> = std::result::Result<T, BridgeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ExternalProcess,
    Baseline,
    InProcess,
}

/// A black-box model. Regression backends return rows of length one.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn task(&self) -> Task;
    /// Label space; empty for regression.
    fn labels(&self) -> &[String];
    /// Stable description of the backend configuration, hashed into the model id.
    fn identity(&self) -> String;
    fn predict_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;

    fn is_alive(&self) -> bool {
        true
    }

    fn restart(&self) -> Result<()> {
        Ok(())
    }
}

/// Check a single output row against the task contract.
pub fn validate_row(task: Task, n_labels: usize, row: &[f64]) -> Result<()> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(BridgeError::InvalidOutput("non-finite value".into()));
    }
    match task {
        Task::Regression if row.len() != 1 => Err(BridgeError::InvalidOutput(format!(
            "expected a scalar score, got {} values",
            row.len()
        ))),
        Task::Regression => Ok(()),
        Task::Classification => {
            if row.len() != n_labels {
                return Err(BridgeError::InvalidOutput(format!(
                    "expected {n_labels} probabilities, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|p| *p < 0.0) {
                return Err(BridgeError::InvalidOutput("negative probability".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                return Err(BridgeError::InvalidOutput(format!(
                    "probabilities sum to {sum}"
                )));
            }
            Ok(())
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionBatch {
    pub texts: Vec<String>,
    /// Probability rows (classification) or single-element score rows (regression).
    pub outputs: Vec<Vec<f64>>,
}

impl PredictionBatch {
    pub fn predicted_labels(&self) -> Vec<usize> {
        self.outputs.iter().map(|r| argmax(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub alive: bool,
    pub kind: BackendKind,
    pub cache_size: usize,
}

/// Handle to a black-box model with caching. Safe to share across threads.
pub struct Predictor {
    backend: Box<dyn Backend>,
    model_id: String,
    batch_size: usize,
    cache: Mutex<HashMap<u128, Vec<f64>>>,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Predictor")
            .field("kind", &self.backend.kind())
            .field("model_id", &self.model_id)
            .finish()
    }
}

impl Predictor {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::from_boxed(Box::new(backend))
    }

    pub fn from_boxed(backend: Box<dyn Backend>) -> Self {
        let model_id = sha256_hex(
            format!("{:?}\n{}", backend.kind(), backend.identity()).as_bytes(),
        );
        Predictor {
            backend,
            model_id,
            batch_size: DEFAULT_BATCH_SIZE,
            cache: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn task(&self) -> Task {
        self.backend.task()
    }

    pub fn labels(&self) -> &[String] {
        self.backend.labels()
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Number of batches sent to the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// Predict `texts`, serving repeated texts from the cache.
    pub fn predict(&self, texts: &[String]) -> Result<PredictionBatch> {
        let keys: Vec<u128> = texts.iter().map(|t| text_key(t)).collect();
        let mut missing: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut queued = BTreeSet::new();
            for (i, key) in keys.iter().enumerate() {
                if !cache.contains_key(key) && queued.insert(*key) {
                    missing.push(i);
                }
            }
        }
        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let rows = self.call_backend(&batch)?;
            let mut cache = self.cache.lock().unwrap();
            for (&i, row) in chunk.iter().zip(rows) {
                cache.insert(keys[i], row);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(PredictionBatch {
            texts: texts.to_vec(),
            outputs: keys.iter().map(|k| cache[k].clone()).collect(),
        })
    }

    pub fn predict_one(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.predict(&[text.to_owned()])?.outputs.remove(0))
    }

    /// Send `texts` straight to the backend, bypassing the cache.
    pub fn predict_uncached(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.call_backend(texts)
    }

    /// Re-query the backend for already cached texts and return those whose
    /// outputs differ from the cached value.
    pub fn check_determinism(&self, texts: &[String]) -> Result<Vec<String>> {
        let cached = self.predict(texts)?;
        let fresh = self.call_backend(texts)?;
        Ok(texts
            .iter()
            .zip(cached.outputs.iter().zip(&fresh))
            .filter(|(_, (a, b))| a != b)
            .map(|(t, _)| t.clone())
            .collect())
    }

    fn call_backend(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let rows = self.backend.predict_raw(texts)?;
        if rows.len() != texts.len() {
            return Err(BridgeError::InvalidOutput(format!(
                "expected {} outputs, got {}",
                texts.len(),
                rows.len()
            )));
        }
        let n_labels = self.labels().len();
        for row in &rows {
            validate_row(self.task(), n_labels, row)?;
        }
        Ok(rows)
    }

    pub fn probe_health(&self) -> Health {
        Health {
            alive: self.backend.is_alive(),
            kind: self.backend.kind(),
            cache_size: self.cache.lock().unwrap().len(),
        }
    }

    pub fn restart(&self) -> Result<()> {
        self.backend.restart()
    }

    /// Scalar model output used as the explanation target: the probability
    /// of `label` for classification, the score for regression.
    pub fn target_value(&self, row: &[f64], label: Option<usize>) -> f64 {
        match self.task() {
            Task::Classification => row[label.unwrap_or(0)],
            Task::Regression => row[0],
        }
    }
}

// ---------------------------------------------------------------------------
// Baseline: multinomial naive Bayes

/// Multinomial naive Bayes with Laplace smoothing over [`tokenize`] tokens.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineModel {
    labels: Vec<String>,
    prior_counts: Vec<f64>,
    token_counts: BTreeMap<String, Vec<f64>>,
    label_totals: Vec<f64>,
    alpha: f64,
}

impl BaselineModel {
    pub fn train(dataset: &Dataset, split: &str, alpha: f64) -> Result<Self> {
        if dataset.task() != Task::Classification {
            return Err(BridgeError::Training("baseline requires a classification task".into()));
        }
        let instances = dataset
            .split_instances(split)
            .map_err(|e| BridgeError::Training(e.to_string()))?;
        let labelled: Vec<(usize, &str)> = instances
            .iter()
            .filter_map(|i| match &i.gold {
                Some(Gold::Label(l)) => Some((dataset.label_index(l)?, i.text.as_str())),
                _ => None,
            })
            .collect();
        Self::fit(dataset.labels().to_vec(), &labelled, alpha)
    }

    /// Fit from `(label index, text)` pairs.
    pub fn fit(labels: Vec<String>, examples: &[(usize, &str)], alpha: f64) -> Result<Self> {
        if examples.is_empty() {
            return Err(BridgeError::Training("no labelled training instances".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(BridgeError::Training("smoothing must be finite and >= 0".into()));
        }
        let k = labels.len();
        let mut prior_counts = vec![0.0; k];
        let mut label_totals = vec![0.0; k];
        let mut token_counts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for &(label, text) in examples {
            prior_counts[label] += 1.0;
            for tok in tokenize(text) {
                token_counts.entry(tok).or_insert_with(|| vec![0.0; k])[label] += 1.0;
                label_totals[label] += 1.0;
            }
        }
        Ok(BaselineModel {
            labels,
            prior_counts,
            token_counts,
            label_totals,
            alpha,
        })
    }

    pub fn posterior(&self, text: &str) -> Vec<f64> {
        let n: f64 = self.prior_counts.iter().sum();
        let vocab = self.token_counts.len() as f64;
        let mut log_post: Vec<f64> = self.prior_counts.iter().map(|c| (c / n).ln()).collect();
        for tok in tokenize(text) {
            if let Some(counts) = self.token_counts.get(&tok) {
                for (l, lp) in log_post.iter_mut().enumerate() {
                    *lp += ((counts[l] + self.alpha) / (self.label_totals[l] + self.alpha * vocab)).ln();
                }
            }
        }
        let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = log_post.iter().map(|lp| (lp - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }
}

impl Backend for BaselineModel {
    fn kind(&self) -> BackendKind {
        BackendKind::Baseline
    }

    fn task(&self) -> Task {
        Task::Classification
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn identity(&self) -> String {
        serde_json::to_string(self).expect("baseline serializes")
    }

    fn predict_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(Exec::default().map_slice(texts, |t| self.posterior(t)))
    }
}

/// Train the naive Bayes baseline on a split and wrap it in a [`Predictor`].
pub fn train_baseline(dataset: &Dataset, split: &str) -> Result<Predictor> {
    Ok(Predictor::new(BaselineModel::train(dataset, split, 1.0)?))
}

// ---------------------------------------------------------------------------
// Lexicon model: additive over distinct-token presence

/// Additive in-process model: `intercept + sum of weights of present tokens`.
///
/// For classification it needs exactly two labels and returns
/// `[1 - s, s]`, so the score must stay inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconModel {
    task: Task,
    labels: Vec<String>,
    intercept: f64,
    weights: BTreeMap<String, f64>,
}

impl LexiconModel {
    pub fn regression(intercept: f64, weights: BTreeMap<String, f64>) -> Self {
        LexiconModel {
            task: Task::Regression,
            labels: Vec::new(),
            intercept,
            weights,
        }
    }

    pub fn binary(labels: [&str; 2], intercept: f64, weights: BTreeMap<String, f64>) -> Self {
        LexiconModel {
            task: Task::Classification,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            intercept,
            weights,
        }
    }

    pub fn score(&self, text: &str) -> f64 {
        let present: BTreeSet<String> = tokenize(text).into_iter().collect();
        self.intercept
            + present
                .iter()
                .filter_map(|t| self.weights.get(t))
                .sum::<f64>()
    }
}

impl Backend for LexiconModel {
    fn kind(&self) -> BackendKind {
        BackendKind::InProcess
    }

    fn task(&self) -> Task {
        self.task
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn identity(&self) -> String {
        serde_json::to_string(self).expect("lexicon serializes")
    }

    fn predict_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let s = self.score(t);
                match self.task {
                    Task::Regression => vec![s],
                    Task::Classification => vec![1.0 - s, s],
                }
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// External process

/// Wire messages of model protocol v1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Reply {
    Handshake {
        task: Task,
        #[serde(default)]
        labels: Vec<String>,
    },
    Prediction {
        id: u64,
        outputs: Vec<Value>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

struct ProcessState {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    next_id: u64,
    dead: Option<String>,
}

impl Drop for ProcessState {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A child process speaking the line-delimited JSON model protocol.
pub struct ExternalProcess {
    command: Vec<String>,
    task: Task,
    labels: Vec<String>,
    timeout: Duration,
    state: Mutex<Option<ProcessState>>,
}

impl ExternalProcess {
    /// Spawn `command` and perform the handshake. When `expected_labels` is
    /// given the backend must report exactly that label list.
    pub fn spawn(
        command: &[String],
        expected_task: Option<Task>,
        expected_labels: Option<&[String]>,
        timeout: Duration,
    ) -> Result<Self> {
        if command.is_empty() {
            return Err(BridgeError::Spawn("empty command".into()));
        }
        let (state, task, labels) = Self::launch(command, timeout)?;
        if let Some(expected) = expected_task {
            if expected != task {
                return Err(BridgeError::TaskMismatch {
                    backend: task.as_str().into(),
                    expected: expected.as_str().into(),
                });
            }
        }
        if let Some(expected) = expected_labels {
            if task == Task::Classification && expected != labels.as_slice() {
                return Err(BridgeError::LabelMismatch {
                    backend: labels,
                    expected: expected.to_vec(),
                });
            }
        }
        Ok(ExternalProcess {
            command: command.to_vec(),
            task,
            labels,
            timeout,
            state: Mutex::new(Some(state)),
        })
    }

    fn launch(command: &[String], timeout: Duration) -> Result<(ProcessState, Task, Vec<String>)> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Spawn(format!("{}: {e}", command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let mut state = ProcessState {
            child,
            stdin,
            lines: rx,
            next_id: 1,
            dead: None,
        };
        let hello = json!({"type": "handshake", "version": PROTOCOL_VERSION});
        send_line(&mut state, &hello).map_err(|e| BridgeError::Handshake(e.to_string()))?;
        let deadline = Instant::now() + timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match state.lines.recv_timeout(remaining) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(BridgeError::HandshakeTimeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(BridgeError::Handshake("backend closed its output".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return match serde_json::from_str::<Reply>(&line) {
                Ok(Reply::Handshake { task, labels }) => {
                    if task == Task::Classification && labels.is_empty() {
                        Err(BridgeError::Handshake("classification backend sent no labels".into()))
                    } else {
                        Ok((state, task, labels))
                    }
                }
                Ok(other) => Err(BridgeError::Handshake(format!("unexpected reply {other:?}"))),
                Err(e) => Err(BridgeError::Handshake(format!("malformed reply: {e}"))),
            };
        }
    }

    fn request(&self, state: &mut ProcessState, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if let Some(reason) = &state.dead {
            return Err(BridgeError::Crash(reason.clone()));
        }
        let id = state.next_id;
        state.next_id += 1;
        let msg = json!({"type": "predict", "id": id, "texts": texts});
        if let Err(e) = send_line(state, &msg) {
            return Err(self.mark_crashed(state, format!("write failed: {e}")));
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match state.lines.recv_timeout(remaining) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => {
                    let _ = state.child.kill();
                    state.dead = Some("timed out".into());
                    return Err(BridgeError::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(self.mark_crashed(state, "backend closed its output".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let reply: Reply = serde_json::from_str(&line)
                .map_err(|e| BridgeError::InvalidOutput(format!("malformed reply: {e}")))?;
            match reply {
                Reply::Prediction { id: rid, outputs } if rid == id => {
                    return self.parse_outputs(outputs)
                }
                Reply::Error { id: Some(rid), message } if rid == id => {
                    return Err(BridgeError::Backend(message))
                }
                Reply::Error { id: None, message } => return Err(BridgeError::Backend(message)),
                // stale reply to an earlier, abandoned request
                _ => continue,
            }
        }
    }

    fn mark_crashed(&self, state: &mut ProcessState, reason: String) -> BridgeError {
        let status = state
            .child
            .wait_timeout_ms(200)
            .map(|s| format!(" ({s})"))
            .unwrap_or_default();
        let reason = format!("{reason}{status}");
        state.dead = Some(reason.clone());
        BridgeError::Crash(reason)
    }

    fn parse_outputs(&self, outputs: Vec<Value>) -> Result<Vec<Vec<f64>>> {
        let number = |v: &Value| {
            v.as_f64()
                .ok_or_else(|| BridgeError::InvalidOutput(format!("not a number: {v}")))
        };
        outputs
            .iter()
            .map(|o| match (self.task, o) {
                (Task::Regression, v) => Ok(vec![number(v)?]),
                (Task::Classification, Value::Array(row)) => row.iter().map(number).collect(),
                (Task::Classification, v) => Err(BridgeError::InvalidOutput(format!(
                    "expected a probability vector, got {v}"
                ))),
            })
            .collect()
    }
}

fn send_line(state: &mut ProcessState, msg: &Value) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(msg).expect("message serializes");
    line.push(b'\n');
    state.stdin.write_all(&line)?;
    state.stdin.flush()
}

trait WaitTimeout {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus>;
}

impl WaitTimeout for Child {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<std::process::ExitStatus> {
        let deadline = Instant::now() + Duration::from_millis(ms);
        loop {
            match self.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => return None,
            }
        }
    }
}

impl Backend for ExternalProcess {
    fn kind(&self) -> BackendKind {
        BackendKind::ExternalProcess
    }

    fn task(&self) -> Task {
        self.task
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn identity(&self) -> String {
        json!({"command": self.command, "task": self.task, "labels": self.labels}).to_string()
    }

    fn predict_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut guard = self.state.lock().unwrap();
        match guard.as_mut() {
            Some(state) => self.request(state, texts),
            None => Err(BridgeError::NotAlive),
        }
    }

    fn is_alive(&self) -> bool {
        let mut guard = self.state.lock().unwrap();
        match guard.as_mut() {
            Some(state) => state.dead.is_none() && matches!(state.child.try_wait(), Ok(None)),
            None => false,
        }
    }

    fn restart(&self) -> Result<()> {
        let mut guard = self.state.lock().unwrap();
        guard.take();
        let (state, task, labels) = Self::launch(&self.command, self.timeout)?;
        if task != self.task || labels != self.labels {
            return Err(BridgeError::Handshake("backend changed its task or labels on restart".into()));
        }
        *guard = Some(state);
        Ok(())
    }
}

/// Spawn an external backend and wrap it in a [`Predictor`].
pub fn spawn_external(
    command: &[String],
    expected_task: Option<Task>,
    labels: Option<&[String]>,
    timeout: Duration,
) -> Result<Predictor> {
    Ok(Predictor::new(ExternalProcess::spawn(command, expected_task, labels, timeout)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Instance;

    fn good_bad() -> Dataset {
        Dataset::new(
            Task::Classification,
            vec![],
            vec![
                Instance::new("a", "good").with_label("pos"),
                Instance::new("b", "bad").with_label("neg"),
            ],
            vec![("train".into(), vec!["a".into(), "b".into()])],
        )
        .unwrap()
    }

    #[test]
    fn baseline_posterior_matches_hand_computation() {
        let p = train_baseline(&good_bad(), "train").unwrap();
        assert_eq!(p.labels(), &["neg".to_string(), "pos".to_string()]);
        let row = p.predict_one("good").unwrap();
        assert!((row[1] - 2.0 / 3.0).abs() < 1e-12);
        // unseen token leaves the (equal) priors untouched
        let row = p.predict_one("meh").unwrap();
        assert!((row[0] - 0.5).abs() < 1e-12 && (row[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_label_baseline_is_certain() {
        let ds = Dataset::new(
            Task::Classification,
            vec![],
            vec![Instance::new("a", "x y").with_label("only")],
            vec![("train".into(), vec!["a".into()])],
        )
        .unwrap();
        let p = train_baseline(&ds, "train").unwrap();
        assert_eq!(p.predict_one("anything x").unwrap(), vec![1.0]);
    }

    #[test]
    fn baseline_rejects_regression_and_empty_split() {
        let reg = Dataset::new(
            Task::Regression,
            vec![],
            vec![Instance::new("a", "x").with_value(1.0)],
            vec![("train".into(), vec!["a".into()]), ("none".into(), vec![])],
        )
        .unwrap();
        assert!(matches!(train_baseline(&reg, "train"), Err(BridgeError::Training(_))));
        let ds = good_bad().assign_split("none", vec![]).unwrap();
        assert!(matches!(train_baseline(&ds, "none"), Err(BridgeError::Training(_))));
    }

    #[test]
    fn cache_serves_repeats() {
        let p = train_baseline(&good_bad(), "train").unwrap();
        let a = p.predict_one("good").unwrap();
        let calls = p.backend_calls();
        let b = p.predict_one("good").unwrap();
        assert_eq!(a, b);
        assert_eq!(p.backend_calls(), calls);
        p.predict(&["x".into(), "y".into(), "x".into()]).unwrap();
        let h = p.probe_health();
        assert!(h.alive);
        assert_eq!(h.kind, BackendKind::Baseline);
        assert_eq!(h.cache_size, 3);
        assert!(p.check_determinism(&["good".into()]).unwrap().is_empty());
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let p = train_baseline(&good_bad(), "train").unwrap();
        let texts: Vec<String> = ["good", "bad", "good bad", "meh"].iter().map(|s| s.to_string()).collect();
        let fwd = p.predict(&texts).unwrap().outputs;
        let rev_texts: Vec<String> = texts.iter().rev().cloned().collect();
        let mut rev = p.predict(&rev_texts).unwrap().outputs;
        rev.reverse();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn validate_row_contract() {
        assert!(validate_row(Task::Classification, 2, &[0.4, 0.6]).is_ok());
        assert!(validate_row(Task::Classification, 2, &[0.4, 0.6, 0.0]).is_err());
        assert!(validate_row(Task::Classification, 2, &[0.4, 0.7]).is_err());
        assert!(validate_row(Task::Classification, 2, &[-0.1, 1.1]).is_err());
        assert!(validate_row(Task::Regression, 0, &[f64::NAN]).is_err());
        assert!(validate_row(Task::Regression, 0, &[3.2]).is_ok());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    #[test]
    fn lexicon_model_is_additive() {
        let w: BTreeMap<String, f64> = [("a".to_string(), 0.5), ("b".to_string(), 0.2)].into();
        let m = LexiconModel::binary(["neg", "pos"], 0.1, w);
        assert!((m.score("a b a") - 0.8).abs() < 1e-15);
        assert!((m.score("b") - 0.3).abs() < 1e-15);
    }
}
