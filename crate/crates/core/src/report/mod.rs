//! Digestibles, canonical reports and their verification.

mod html;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::rng::sha256_hex;
use crate::ARTIFACT_VERSION;

pub use html::render_html;

pub const SCHEMA_ID: &str = "explabox-report/v1";
pub const REPORT_EXTENSION: &str = ".explabox.json";
/// `created_at` value unless a real timestamp is requested.
pub const FIXED_EPOCH: &str = "1970-01-01T00:00:00Z";
pub const SCHEMA_JSON: &str = include_str!("../../schema/report.v1.schema.json");

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("non-finite number at {0}")]
    NonFinite(String),
    #[error("cannot serialize payload: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DigestibleKind {
    SplitStats,
    Metrics,
    Confusion,
    Attribution,
    GlobalSummary,
    TestResult,
    FairnessReport,
    FuzzResult,
}

impl DigestibleKind {
    pub const ALL: [DigestibleKind; 8] = [
        DigestibleKind::SplitStats,
        DigestibleKind::Metrics,
        DigestibleKind::Confusion,
        DigestibleKind::Attribution,
        DigestibleKind::GlobalSummary,
        DigestibleKind::TestResult,
        DigestibleKind::FairnessReport,
        DigestibleKind::FuzzResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DigestibleKind::SplitStats => "split-stats",
            DigestibleKind::Metrics => "metrics",
            DigestibleKind::Confusion => "confusion",
            DigestibleKind::Attribution => "attribution",
            DigestibleKind::GlobalSummary => "global-summary",
            DigestibleKind::TestResult => "test-result",
            DigestibleKind::FairnessReport => "fairness-report",
            DigestibleKind::FuzzResult => "fuzz-result",
        }
    }
}

/// Everything needed to regenerate a digestible from the ingestibles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub operation: String,
    pub seed: u64,
    pub params: Value,
    pub model_id: Option<String>,
    pub dataset_hash: Option<String>,
    pub module_version: String,
}

impl Provenance {
    pub fn new(operation: &str, seed: u64, params: Value) -> Self {
        Provenance {
            operation: operation.to_owned(),
            seed,
            params,
            model_id: None,
            dataset_hash: None,
            module_version: ARTIFACT_VERSION.to_owned(),
        }
    }

    pub fn with_model(mut self, model_id: &str) -> Self {
        self.model_id = Some(model_id.to_owned());
        self
    }

    pub fn with_dataset(mut self, dataset_hash: &str) -> Self {
        self.dataset_hash = Some(dataset_hash.to_owned());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Digestible {
    pub kind: DigestibleKind,
    pub payload: Value,
    pub provenance: Provenance,
}

impl Digestible {
    /// Wrap a payload, rejecting non-finite numbers anywhere inside it.
    pub fn new<T: Serialize>(kind: DigestibleKind, payload: &T, provenance: Provenance) -> Result<Self, ReportError> {
        Ok(Digestible {
            kind,
            payload: to_finite_value(payload)?,
            provenance,
        })
    }
}

fn check_finite(value: &serde_value::Value, path: &mut String) -> Result<(), ReportError> {
    use serde_value::Value as V;
    match value {
        V::F32(x) if !x.is_finite() => Err(ReportError::NonFinite(path.clone())),
        V::F64(x) if !x.is_finite() => Err(ReportError::NonFinite(path.clone())),
        V::Option(Some(inner)) | V::Newtype(inner) => check_finite(inner, path),
        V::Seq(items) => items.iter().enumerate().try_for_each(|(i, v)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let r = check_finite(v, path);
            path.truncate(len);
            r
        }),
        V::Map(entries) => entries.iter().try_for_each(|(k, v)| {
            let len = path.len();
            match k {
                V::String(s) => path.push_str(&format!(".{s}")),
                other => path.push_str(&format!(".{other:?}")),
            }
            let r = check_finite(v, path);
            path.truncate(len);
            r
        }),
        _ => Ok(()),
    }
}

/// Serialize to JSON, failing on NaN or infinities instead of writing `null`.
pub fn to_finite_value<T: Serialize + ?Sized>(value: &T) -> Result<Value, ReportError> {
    let raw = serde_value::to_value(value).map_err(|e| ReportError::Serialize(e.to_string()))?;
    check_finite(&raw, &mut String::from("$"))?;
    serde_json::to_value(&raw).map_err(|e| ReportError::Serialize(e.to_string()))
}

/// Compact UTF-8 JSON with object keys sorted and shortest round-trip numbers.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, ReportError> {
    let value = to_finite_value(value)?;
    Ok(canonical_bytes(&value))
}

/// Canonical bytes of an already-finite JSON value.
pub fn canonical_bytes(value: &Value) -> Vec<u8> {
    // serde_json maps are ordered by key, so plain compact output is canonical
    serde_json::to_vec(value).expect("JSON values always serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub schema: String,
    pub artifact_version: String,
    pub created_at: String,
    pub seed: u64,
    pub manifest_hash: Option<String>,
    pub dataset_hash: String,
    pub model_id: String,
}

impl ReportMeta {
    pub fn new(seed: u64, manifest_hash: Option<String>, dataset_hash: String, model_id: String) -> Self {
        ReportMeta {
            schema: SCHEMA_ID.to_owned(),
            artifact_version: ARTIFACT_VERSION.to_owned(),
            created_at: FIXED_EPOCH.to_owned(),
            seed,
            manifest_hash,
            dataset_hash,
            model_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub digestibles: Vec<Digestible>,
    pub content_hash: String,
}

fn hash_body(meta: &ReportMeta, digestibles: &[Digestible]) -> Result<String, ReportError> {
    let body = json!({
        "meta": to_finite_value(meta)?,
        "digestibles": to_finite_value(digestibles)?,
    });
    Ok(sha256_hex(&canonical_bytes(&body)))
}

impl Report {
    pub fn new(meta: ReportMeta, digestibles: Vec<Digestible>) -> Result<Self, ReportError> {
        let content_hash = hash_body(&meta, &digestibles)?;
        Ok(Report {
            meta,
            digestibles,
            content_hash,
        })
    }

    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, ReportError> {
        canonical_json(self)
    }
}

fn schema_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: Value = serde_json::from_str(SCHEMA_JSON).expect("embedded schema parses");
        jsonschema::validator_for(&schema).expect("embedded schema compiles")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub valid: bool,
    pub stated_hash: Option<String>,
    pub recomputed_hash: Option<String>,
    pub schema_violations: Vec<String>,
}

/// Parse, schema-check and re-hash a serialized report. Problems are data.
pub fn verify_report(bytes: &[u8]) -> Verification {
    let mut violations = Vec::new();
    let value: Value = match serde_json::from_slice(bytes) {
        Ok(v) => v,
        Err(e) => {
            return Verification {
                valid: false,
                stated_hash: None,
                recomputed_hash: None,
                schema_violations: vec![format!("not valid JSON: {e}")],
            }
        }
    };
    for error in schema_validator().iter_errors(&value) {
        let at = error.instance_path().to_string();
        violations.push(if at.is_empty() { error.to_string() } else { format!("{at}: {error}") });
    }
    let stated_hash = value.get("content_hash").and_then(Value::as_str).map(str::to_owned);
    let recomputed_hash = match &value {
        Value::Object(map) => {
            let body: Map<String, Value> = map
                .iter()
                .filter(|(k, _)| k.as_str() != "content_hash")
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            Some(sha256_hex(&canonical_bytes(&Value::Object(body))))
        }
        _ => None,
    };
    let hash_ok = stated_hash.is_some() && stated_hash == recomputed_hash;
    if !hash_ok {
        violations.push("content_hash does not match the recomputed hash".to_owned());
    }
    Verification {
        valid: violations.is_empty(),
        stated_hash,
        recomputed_hash,
        schema_violations: violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let meta = ReportMeta::new(3, None, "a".repeat(64), "b".repeat(64));
        let d = Digestible::new(
            DigestibleKind::Metrics,
            &json!({"task": "classification", "accuracy": 0.5}),
            Provenance::new("examine", 3, json!({"split": "test"})),
        )
        .unwrap();
        Report::new(meta, vec![d]).unwrap()
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical_json(&json!({"b": 1, "a": 2})).unwrap(), br#"{"a":2,"b":1}"#);
        assert_eq!(canonical_json(&0.5).unwrap(), b"0.5");
        assert!(matches!(canonical_json(&vec![1.0, f64::NAN]), Err(ReportError::NonFinite(p)) if p == "$[1]"));
        #[derive(Serialize)]
        struct S {
            x: Option<f64>,
        }
        assert!(canonical_json(&S { x: Some(f64::INFINITY) }).is_err());
        assert_eq!(canonical_json(&S { x: None }).unwrap(), br#"{"x":null}"#);
    }

    #[test]
    fn kind_tags_are_closed_and_named() {
        for k in DigestibleKind::ALL {
            assert_eq!(serde_json::to_value(k).unwrap(), k.as_str());
        }
    }

    #[test]
    fn untampered_report_verifies() {
        let bytes = sample().to_canonical_bytes().unwrap();
        let v = verify_report(&bytes);
        assert!(v.valid, "{:?}", v.schema_violations);
        assert_eq!(v.stated_hash, v.recomputed_hash);
    }

    #[test]
    fn tampering_is_detected() {
        let bytes = sample().to_canonical_bytes().unwrap();
        let s = String::from_utf8(bytes).unwrap();
        let flipped = s.replace("0.5", "0.6");
        assert!(!verify_report(flipped.as_bytes()).valid);
        let unknown = s.replace("\"metrics\"", "\"mystery\"");
        let v = verify_report(unknown.as_bytes());
        assert!(v.schema_violations.iter().any(|m| m.contains("/digestibles/0/kind")), "{v:?}");
        assert!(!verify_report(b"not json").valid);
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let once = sample().to_canonical_bytes().unwrap();
        let parsed: Value = serde_json::from_slice(&once).unwrap();
        assert_eq!(canonical_bytes(&parsed), once);
    }
}
