//! Reference backend for model protocol v1, used by the conformance tests.
//!
//! Usage: `explabox-stub-model <mode> [labels...]`
//!
//! The classifier scores `good` as +1 and `bad` as -1 per occurrence and
//! returns a logistic distribution over two labels (or uniform beyond two).
//! Modes alter one aspect of its behaviour:
//!
//! - `labels`: well-behaved classifier
//! - `regression`: well-behaved regressor, output = good count - bad count
//! - `crash-on-empty`: exits when asked to predict an empty text
//! - `wrong-arity`: returns one output fewer than requested
//! - `hang`: never answers predictions
//! - `error-on`: replies with a protocol error for texts containing `ERR`
//! - `no-handshake`: never answers the handshake
//! - `bad-distribution`: probabilities that do not sum to one
//! - `flaky`: different output every call for the same text

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

fn score(text: &str) -> f64 {
    text.split_whitespace()
        .map(|t| match t.to_lowercase().trim_matches(|c: char| !c.is_alphanumeric()) {
            "good" => 1.0,
            "bad" => -1.0,
            _ => 0.0,
        })
        .sum()
}

fn distribution(text: &str, n_labels: usize) -> Vec<f64> {
    if n_labels == 2 {
        let p = 1.0 / (1.0 + (-score(text)).exp());
        vec![1.0 - p, p]
    } else {
        vec![1.0 / n_labels as f64; n_labels]
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mode = args.next().unwrap_or_else(|| "labels".to_owned());
    let mut labels: Vec<String> = args.collect();
    if labels.is_empty() {
        labels = vec!["neg".into(), "pos".into()];
    }
    let regression = mode == "regression";
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut calls = 0u64;

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(msg) = serde_json::from_str::<Value>(&line) else {
            let _ = writeln!(out, "{}", json!({"type": "error", "message": "unparseable request"}));
            let _ = out.flush();
            continue;
        };
        let reply = match msg["type"].as_str() {
            Some("handshake") => {
                if mode == "no-handshake" {
                    continue;
                }
                if regression {
                    json!({"type": "handshake", "task": "regression"})
                } else {
                    json!({"type": "handshake", "task": "classification", "labels": labels})
                }
            }
            Some("predict") => {
                let id = msg["id"].clone();
                let texts: Vec<&str> = msg["texts"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
                calls += 1;
                match mode.as_str() {
                    "hang" => continue,
                    "crash-on-empty" if texts.iter().any(|t| t.is_empty()) => std::process::exit(101),
                    "error-on" if texts.iter().any(|t| t.contains("ERR")) => {
                        json!({"type": "error", "id": id, "message": "refusing input containing ERR"})
                    }
                    _ => {
                        let mut outputs: Vec<Value> = texts
                            .iter()
                            .map(|t| match mode.as_str() {
                                "regression" => json!(score(t)),
                                "bad-distribution" => json!(vec![0.7; labels.len()]),
                                "flaky" => {
                                    let p = 1.0 / (calls as f64 + 1.0);
                                    json!([1.0 - p, p])
                                }
                                _ => json!(distribution(t, labels.len())),
                            })
                            .collect();
                        if mode == "wrong-arity" {
                            outputs.pop();
                        }
                        json!({"type": "prediction", "id": id, "outputs": outputs})
                    }
                }
            }
            _ => json!({"type": "error", "id": msg["id"], "message": "unknown request type"}),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
