//! Dataset ingestion: manifest loading, validation, named splits,
//! tokenization and tf-idf vectorization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::rng::sha256_hex;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file `{0}`")]
    MissingFile(PathBuf),

    #[error("missing column `{column}` in `{source_name}`")]
    MissingColumn { column: String, source_name: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("label `{0}` is outside the declared label space")]
    LabelOutsideSpace(String),

    #[error("invalid gold value `{value}` for instance `{id}`")]
    InvalidGold { id: String, value: String },

    #[error("unknown instance id `{0}`")]
    UnknownId(String),

    #[error("unknown split `{0}`")]
    UnknownSplit(String),

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("classification dataset needs a non-empty label list")]
    EmptyLabelSpace,

    #[error("malformed input in `{source_name}` line {line}: {message}")]
    Malformed {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

/// Gold annotation: a class label or a real-valued target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Label(String),
    Value(f64),
}

impl Gold {
    pub fn label(&self) -> Option<&str> {
        match self {
            Gold::Label(l) => Some(l),
            Gold::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Gold::Value(v) => Some(*v),
            Gold::Label(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Gold>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Instance {
            id: id.into(),
            text: text.into(),
            gold: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.gold = Some(Gold::Label(label.into()));
        self
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.gold = Some(Gold::Value(value));
        self
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

/// A validated collection of instances with named splits.
///
/// Immutable once built: [`Dataset::assign_split`] consumes and returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task: Task,
    labels: Vec<String>,
    instances: BTreeMap<String, Instance>,
    splits: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    /// Build and validate a dataset. An empty `labels` list on a
    /// classification task is inferred as the sorted distinct gold labels.
    pub fn new(
        task: Task,
        labels: Vec<String>,
        instances: Vec<Instance>,
        splits: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let mut map = BTreeMap::new();
        for inst in instances {
            if map.contains_key(&inst.id) {
                return Err(IngestError::DuplicateId(inst.id));
            }
            map.insert(inst.id.clone(), inst);
        }
        let labels = match task {
            Task::Classification => {
                let labels = if labels.is_empty() {
                    let distinct: BTreeSet<&str> =
                        map.values().filter_map(|i| i.gold.as_ref()?.label()).collect();
                    distinct.into_iter().map(str::to_owned).collect()
                } else {
                    labels
                };
                if labels.is_empty() {
                    return Err(IngestError::EmptyLabelSpace);
                }
                let set: BTreeSet<&String> = labels.iter().collect();
                if set.len() != labels.len() {
                    return Err(IngestError::Manifest("duplicate label in label list".into()));
                }
                for inst in map.values() {
                    match &inst.gold {
                        Some(Gold::Label(l)) if !set.contains(l) => {
                            return Err(IngestError::LabelOutsideSpace(l.clone()))
                        }
                        Some(Gold::Value(v)) => {
                            return Err(IngestError::InvalidGold {
                                id: inst.id.clone(),
                                value: v.to_string(),
                            })
                        }
                        _ => {}
                    }
                }
                labels
            }
            Task::Regression => {
                for inst in map.values() {
                    match &inst.gold {
                        Some(Gold::Value(v)) if !v.is_finite() => {
                            return Err(IngestError::InvalidGold {
                                id: inst.id.clone(),
                                value: v.to_string(),
                            })
                        }
                        Some(Gold::Label(l)) => {
                            return Err(IngestError::InvalidGold {
                                id: inst.id.clone(),
                                value: l.clone(),
                            })
                        }
                        _ => {}
                    }
                }
                Vec::new()
            }
        };
        let mut dataset = Dataset {
            task,
            labels,
            instances: map,
            splits: BTreeMap::new(),
        };
        for (name, ids) in splits {
            dataset = dataset.assign_split(&name, ids)?;
        }
        Ok(dataset)
    }

    /// Register (or replace) the split `name`.
    pub fn assign_split(mut self, name: &str, ids: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !self.instances.contains_key(id) {
                return Err(IngestError::UnknownId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(IngestError::DuplicateId(id.clone()));
            }
        }
        self.splits.insert(name.to_owned(), ids);
        Ok(self)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.get(id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }

    pub fn splits(&self) -> &BTreeMap<String, Vec<String>> {
        &self.splits
    }

    pub fn split(&self, name: &str) -> Result<&[String]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| IngestError::UnknownSplit(name.to_owned()))
    }

    /// Instances of a split in split order.
    pub fn split_instances(&self, name: &str) -> Result<Vec<&Instance>> {
        Ok(self.split(name)?.iter().map(|id| &self.instances[id]).collect())
    }

    /// Default split for whole-dataset analyses: `test` if present, else the
    /// first split by name.
    pub fn default_split(&self) -> Option<&str> {
        if self.splits.contains_key("test") {
            Some("test")
        } else {
            self.split_names().next()
        }
    }

    /// Serialize to JSON lines: a header object with task, labels and
    /// splits, then one instance per line in id order.
    pub fn to_jsonl(&self) -> String {
        let header = serde_json::json!({
            "task": self.task,
            "labels": self.labels,
            "splits": self.splits,
        });
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for inst in self.instances.values() {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            task: Task,
            labels: Vec<String>,
            splits: BTreeMap<String, Vec<String>>,
        }
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(IngestError::EmptyDataset)?;
        let malformed = |line: usize, e: serde_json::Error| IngestError::Malformed {
            source_name: "<jsonl>".into(),
            line: line + 1,
            message: e.to_string(),
        };
        let header: Header = serde_json::from_str(first).map_err(|e| malformed(0, e))?;
        let mut instances = Vec::new();
        for (n, line) in lines {
            instances.push(serde_json::from_str::<Instance>(line).map_err(|e| malformed(n, e))?);
        }
        Dataset::new(header.task, header.labels, instances, header.splits.into_iter().collect())
    }

    /// SHA-256 over the JSONL serialization.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: PathBuf,
    pub format: DataFormat,
    pub split: String,
    pub text_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_field: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attribute_fields: Vec<String>,
}

/// Project manifest: the single JSON file describing an audit project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub data: Vec<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => IngestError::MissingFile(path.to_owned()),
            _ => IngestError::Io(e),
        })?;
        let mut manifest = Self::from_json(&text)?;
        manifest.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(manifest)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        if manifest.data.is_empty() {
            return Err(IngestError::Manifest("`data` lists no sources".into()));
        }
        Ok(manifest)
    }

    /// SHA-256 of the canonical (sorted-key, compact) manifest JSON.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("manifest serializes");
        sha256_hex(value.to_string().as_bytes())
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_owned()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Raw record read from a source before validation.
struct RawRow {
    id: Option<String>,
    text: String,
    gold: Option<String>,
    attributes: BTreeMap<String, String>,
}

/// Load and validate every data source named by the manifest.
pub fn load_dataset(manifest: &Manifest) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut splits: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen = HashMap::new();
    for source in &manifest.data {
        let path = manifest.resolve(&source.path);
        if !path.is_file() {
            return Err(IngestError::MissingFile(path));
        }
        let rows = match source.format {
            DataFormat::Csv => read_delimited(&path, b',', source)?,
            DataFormat::Tsv => read_delimited(&path, b'\t', source)?,
            DataFormat::Jsonl => read_jsonl(&path, source)?,
        };
        let split_pos = match splits.iter().position(|(n, _)| n == &source.split) {
            Some(p) => p,
            None => {
                splits.push((source.split.clone(), Vec::new()));
                splits.len() - 1
            }
        };
        let offset = splits[split_pos].1.len();
        for (row_no, row) in rows.into_iter().enumerate() {
            let id = row
                .id
                .unwrap_or_else(|| format!("{}-{}", source.split, offset + row_no));
            if seen.insert(id.clone(), ()).is_some() {
                return Err(IngestError::DuplicateId(id));
            }
            let gold = match row.gold {
                None => None,
                Some(g) => Some(match manifest.task {
                    Task::Classification => Gold::Label(g),
                    Task::Regression => match g.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => Gold::Value(v),
                        _ => return Err(IngestError::InvalidGold { id, value: g }),
                    },
                }),
            };
            splits[split_pos].1.push(id.clone());
            instances.push(Instance {
                id,
                text: row.text,
                gold,
                attributes: row.attributes,
            });
        }
    }
    Dataset::new(
        manifest.task,
        manifest.labels.clone().unwrap_or_default(),
        instances,
        splits,
    )
}

fn read_delimited(path: &Path, delimiter: u8, source: &DataSource) -> Result<Vec<RawRow>> {
    let source_name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::Malformed {
            source_name: source_name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Malformed {
            source_name: source_name.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                column: name.to_owned(),
                source_name: source_name.clone(),
            })
    };
    let text_col = column(&source.text_field)?;
    let label_col = source.label_field.as_deref().map(column).transpose()?;
    let id_col = source.id_field.as_deref().map(column).transpose()?;
    let attr_cols = source
        .attribute_fields
        .iter()
        .map(|a| Ok((a.clone(), column(a)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Malformed {
            source_name: source_name.clone(),
            line: n + 2,
            message: e.to_string(),
        })?;
        let get = |c: usize| record.get(c).unwrap_or("").to_owned();
        let non_empty = |s: String| if s.is_empty() { None } else { Some(s) };
        rows.push(RawRow {
            id: id_col.map(get).and_then(non_empty),
            text: get(text_col),
            gold: label_col.map(get).and_then(non_empty),
            attributes: attr_cols
                .iter()
                .filter_map(|(name, c)| non_empty(get(*c)).map(|v| (name.clone(), v)))
                .collect(),
        });
    }
    Ok(rows)
}

fn read_jsonl(path: &Path, source: &DataSource) -> Result<Vec<RawRow>> {
    let source_name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let missing = |column: &str| IngestError::MissingColumn {
        column: column.to_owned(),
        source_name: source_name.clone(),
    };
    let scalar = |v: &Value| match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, Value> =
            serde_json::from_str(line).map_err(|e| IngestError::Malformed {
                source_name: source_name.clone(),
                line: n + 1,
                message: e.to_string(),
            })?;
        let text = match obj.get(&source.text_field) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(IngestError::Malformed {
                    source_name: source_name.clone(),
                    line: n + 1,
                    message: format!("field `{}` is not a string", source.text_field),
                })
            }
            None => return Err(missing(&source.text_field)),
        };
        let gold = match &source.label_field {
            Some(f) => scalar(obj.get(f).ok_or_else(|| missing(f))?),
            None => None,
        };
        let id = match &source.id_field {
            Some(f) => scalar(obj.get(f).ok_or_else(|| missing(f))?),
            None => None,
        };
        let attributes = source
            .attribute_fields
            .iter()
            .filter_map(|a| obj.get(a).and_then(scalar).map(|v| (a.clone(), v)))
            .collect();
        rows.push(RawRow {
            id,
            text,
            gold,
            attributes,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tokenization

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Strip every Unicode punctuation character from `text`.
pub fn strip_punctuation(text: &str) -> String {
    text.chars().filter(|c| !is_punctuation(*c)).collect()
}

/// Lowercase, split on Unicode whitespace, trim punctuation from both ends of
/// each piece and drop empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(is_punctuation).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Unique tokens in first-occurrence order.
pub fn distinct(tokens: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokens
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenizedInstance {
    pub instance_id: String,
    pub tokens: Vec<String>,
    pub distinct_tokens: Vec<String>,
}

impl TokenizedInstance {
    pub fn new(instance: &Instance) -> Self {
        let tokens = tokenize(&instance.text);
        let distinct_tokens = distinct(&tokens);
        TokenizedInstance {
            instance_id: instance.id.clone(),
            tokens,
            distinct_tokens,
        }
    }
}

// ---------------------------------------------------------------------------
// tf-idf

/// Sparse row with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseRow { indices, values }
    }

    pub fn dot(&self, other: &SparseRow) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Smooth-idf tf-idf vectors with L2-normalized rows over one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfidfIndex {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub ids: Vec<String>,
    pub rows: Vec<SparseRow>,
    /// Ids of documents without tokens (zero rows).
    pub degenerate: Vec<String>,
}

impl TfidfIndex {
    pub fn row(&self, id: &str) -> Option<&SparseRow> {
        self.ids.iter().position(|i| i == id).map(|p| &self.rows[p])
    }

    /// Rows for `ids`, in the given order.
    pub fn rows_for(&self, ids: &[String]) -> std::result::Result<Vec<SparseRow>, IngestError> {
        let pos: HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        ids.iter()
            .map(|id| {
                pos.get(id.as_str())
                    .map(|p| self.rows[*p].clone())
                    .ok_or_else(|| IngestError::UnknownId(id.clone()))
            })
            .collect()
    }
}

/// Build the tf-idf index of a split: tf = raw count,
/// idf = ln((1+N)/(1+df)) + 1, rows L2-normalized.
pub fn build_tfidf(dataset: &Dataset, split: &str) -> Result<TfidfIndex> {
    let instances = dataset.split_instances(split)?;
    if instances.is_empty() {
        return Err(IngestError::EmptySplit(split.to_owned()));
    }
    let docs: Vec<Vec<String>> = instances.iter().map(|i| tokenize(&i.text)).collect();
    let vocab_set: BTreeSet<&str> = docs.iter().flatten().map(String::as_str).collect();
    let vocabulary: BTreeMap<String, usize> = vocab_set
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.to_owned(), i))
        .collect();
    let mut df = vec![0usize; vocabulary.len()];
    let mut counts = Vec::with_capacity(docs.len());
    for doc in &docs {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in doc {
            *tf.entry(vocabulary[tok]).or_default() += 1.0;
        }
        for col in tf.keys() {
            df[*col] += 1;
        }
        counts.push(tf);
    }
    let n = docs.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let mut degenerate = Vec::new();
    let rows = counts
        .into_iter()
        .zip(&instances)
        .map(|(tf, inst)| {
            let (indices, mut values): (Vec<usize>, Vec<f64>) =
                tf.into_iter().map(|(c, count)| (c, count * idf[c])).unzip();
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            } else {
                degenerate.push(inst.id.clone());
            }
            SparseRow { indices, values }
        })
        .collect();
    Ok(TfidfIndex {
        vocabulary,
        idf,
        ids: instances.iter().map(|i| i.id.clone()).collect(),
        rows,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_row_dataset() -> Dataset {
        Dataset::new(
            Task::Classification,
            vec![],
            vec![
                Instance::new("i0", "good").with_label("pos"),
                Instance::new("i1", "bad").with_label("neg"),
            ],
            vec![("test".into(), vec!["i0".into(), "i1".into()])],
        )
        .unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", "world"]);
        assert!(tokenize("").is_empty());
        let toks = tokenize("A a A.");
        assert_eq!(toks, vec!["a", "a", "a"]);
        assert_eq!(distinct(&toks), vec!["a"]);
        assert_eq!(tokenize("  «quoted»  --  x"), vec!["quoted", "x"]);
    }

    #[test]
    fn labels_inferred_sorted() {
        assert_eq!(two_row_dataset().labels(), &["neg".to_string(), "pos".to_string()]);
    }

    #[test]
    fn label_outside_space_rejected() {
        let err = Dataset::new(
            Task::Classification,
            vec!["a".into()],
            vec![Instance::new("x", "t").with_label("b")],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::LabelOutsideSpace(l) if l == "b"));
    }

    #[test]
    fn assign_split_contract() {
        let ds = two_row_dataset().assign_split("dev", vec!["i0".into()]).unwrap();
        assert_eq!(ds.split("dev").unwrap().len(), 1);
        assert!(matches!(
            ds.clone().assign_split("dev", vec!["nope".into()]),
            Err(IngestError::UnknownId(_))
        ));
        assert!(matches!(
            ds.clone().assign_split("dev", vec!["i0".into(), "i0".into()]),
            Err(IngestError::DuplicateId(_))
        ));
        let ds = ds.assign_split("dev", vec!["i1".into()]).unwrap();
        assert_eq!(ds.split("dev").unwrap(), &["i1".to_string()]);
    }

    #[test]
    fn tfidf_examples() {
        let ds = Dataset::new(
            Task::Classification,
            vec!["x".into()],
            vec![Instance::new("d", "a b")],
            vec![("s".into(), vec!["d".into()])],
        )
        .unwrap();
        let idx = build_tfidf(&ds, "s").unwrap();
        let row = &idx.rows[0];
        assert_eq!(row.values[0], row.values[1]);
        assert!((row.norm() - 1.0).abs() < 1e-12);

        let ds = Dataset::new(
            Task::Classification,
            vec!["x".into()],
            vec![Instance::new("d0", "a"), Instance::new("d1", "a"), Instance::new("e", "...")],
            vec![("s".into(), vec!["d0".into(), "d1".into()]), ("t".into(), vec!["d0".into(), "e".into()])],
        )
        .unwrap();
        let idx = build_tfidf(&ds, "s").unwrap();
        assert_eq!(idx.idf[idx.vocabulary["a"]], 1.0);
        let idx = build_tfidf(&ds, "t").unwrap();
        assert_eq!(idx.degenerate, vec!["e".to_string()]);
        assert!(idx.row("e").unwrap().is_zero());
    }

    #[test]
    fn empty_split_rejected() {
        let ds = two_row_dataset().assign_split("none", vec![]).unwrap();
        assert!(matches!(build_tfidf(&ds, "none"), Err(IngestError::EmptySplit(_))));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(text in "\\PC{0,40}") {
            let once = tokenize(&text);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn tfidf_rows_unit_norm(docs in proptest::collection::vec("[a-e ]{0,12}", 1..12)) {
            let instances: Vec<Instance> = docs.iter().enumerate()
                .map(|(i, t)| Instance::new(format!("d{i}"), t.clone())).collect();
            let ids = instances.iter().map(|i| i.id.clone()).collect();
            let ds = Dataset::new(Task::Classification, vec!["x".into()], instances, vec![("s".into(), ids)]).unwrap();
            let idx = build_tfidf(&ds, "s").unwrap();
            for row in &idx.rows {
                if !row.is_zero() {
                    prop_assert!((row.norm() - 1.0).abs() <= 1e-9);
                }
            }
            prop_assert!(idx.idf.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn jsonl_round_trip(texts in proptest::collection::vec(("\\PC{0,20}", 0u8..3), 1..10)) {
            let labels = ["neg", "neu", "pos"];
            let instances: Vec<Instance> = texts.iter().enumerate()
                .map(|(i, (t, l))| Instance::new(format!("r{i}"), t.clone()).with_label(labels[*l as usize]).with_attribute("g", "x"))
                .collect();
            let ids: Vec<String> = instances.iter().map(|i| i.id.clone()).collect();
            let half = ids[..ids.len() / 2].to_vec();
            let ds = Dataset::new(Task::Classification, labels.iter().map(|s| s.to_string()).collect(), instances,
                vec![("all".into(), ids), ("half".into(), half)]).unwrap();
            let back = Dataset::from_jsonl(&ds.to_jsonl()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
