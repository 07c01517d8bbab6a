//! Security fuzzing against a fixed, versioned corpus of hostile inputs.

use serde::Serialize;

use crate::bridge::{BridgeError, Predictor};

pub const FUZZ_CORPUS_VERSION: &str = "explabox-fuzz-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzInput {
    pub name: &'static str,
    pub text: String,
}

pub fn fuzz_corpus() -> Vec<FuzzInput> {
    let controls: String = (0u32..0x20).filter_map(char::from_u32).collect();
    vec![
        FuzzInput {
            name: "empty",
            text: String::new(),
        },
        FuzzInput {
            name: "one-million-a",
            text: "a".repeat(1_000_000),
        },
        FuzzInput {
            name: "control-characters",
            text: controls,
        },
        FuzzInput {
            name: "emoji-rtl-override",
            text: "\u{1F600}\u{1F44D}\u{1F3FD} \u{202E}txet desrever\u{202C} \u{1F468}\u{200D}\u{1F469}\u{200D}\u{1F467}".into(),
        },
        FuzzInput {
            name: "long-token",
            text: "x".repeat(10_000),
        },
        FuzzInput {
            name: "thousand-newlines",
            text: "\n".repeat(1_000),
        },
        FuzzInput {
            name: "high-code-points",
            text: ['\u{10000}', '\u{1D11E}', '\u{2F800}', '\u{E0001}', '\u{F0000}', '\u{10FFFD}']
                .iter()
                .collect(),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Ok,
    Crash,
    Timeout,
    InvalidOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzCase {
    pub name: String,
    pub length_chars: usize,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Whether the backend was restarted after this input.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzResult {
    pub corpus_version: String,
    pub n_inputs: usize,
    pub n_failures: usize,
    pub cases: Vec<FuzzCase>,
}

fn classify(err: &BridgeError) -> (Verdict, String) {
    let verdict = match err {
        BridgeError::Timeout(_) => Verdict::Timeout,
        BridgeError::InvalidOutput(_) => Verdict::InvalidOutput,
        // a structured error reply is a handled rejection, not a failure
        BridgeError::Backend(_) => Verdict::Ok,
        _ => Verdict::Crash,
    };
    (verdict, err.to_string())
}

/// Send each corpus entry on its own, bypassing the cache. Every entry yields
/// exactly one verdict; a dead backend is restarted before the next entry.
pub fn security_fuzz(predictor: &Predictor) -> FuzzResult {
    run_corpus(predictor, fuzz_corpus())
}

pub fn run_corpus(predictor: &Predictor, corpus: Vec<FuzzInput>) -> FuzzResult {
    let mut cases = Vec::with_capacity(corpus.len());
    for input in corpus {
        let (verdict, detail) = match predictor.predict_uncached(std::slice::from_ref(&input.text)) {
            Ok(_) => (Verdict::Ok, None),
            Err(e) => {
                let (v, d) = classify(&e);
                (v, Some(d))
            }
        };
        let mut restarted = false;
        let mut detail = detail;
        if !predictor.probe_health().alive {
            match predictor.restart() {
                Ok(()) => restarted = true,
                Err(e) => {
                    let note = format!("restart failed: {e}");
                    detail = Some(detail.map_or(note.clone(), |d| format!("{d}; {note}")));
                }
            }
        }
        cases.push(FuzzCase {
            name: input.name.to_owned(),
            length_chars: input.text.chars().count(),
            verdict,
            detail,
            restarted,
        });
    }
    FuzzResult {
        corpus_version: FUZZ_CORPUS_VERSION.to_owned(),
        n_inputs: cases.len(),
        n_failures: cases.iter().filter(|c| c.verdict != Verdict::Ok).count(),
        cases,
    }
}
