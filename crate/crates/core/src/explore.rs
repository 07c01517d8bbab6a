//! Descriptive statistics, sorting and filtering per named split.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{tokenize, Dataset, Gold, Instance};

/// Five-number-ish summary of a length distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Summary {
            min: sorted[0],
            max: sorted[n - 1],
            mean,
            median: median_sorted(&sorted),
            std: var.sqrt(),
        })
    }
}

/// Median of sorted values; even counts use the mean of the middle two.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: String,
    pub n_instances: usize,
    pub n_labelled: usize,
    pub label_counts: BTreeMap<String, usize>,
    /// Present for regression datasets with gold values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_values: Option<Summary>,
    pub char_length: Summary,
    pub token_length: Summary,
    pub vocabulary_size: usize,
    pub top_tokens: Vec<(String, usize)>,
}

/// Sort `(token, count)` pairs by count descending then token ascending and keep `k`.
pub fn top_counts(counts: BTreeMap<String, usize>, k: usize) -> Vec<(String, usize)> {
    let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs.truncate(k);
    pairs
}

fn non_empty_split<'a>(dataset: &'a Dataset, split: &str) -> Result<Vec<&'a Instance>> {
    let instances = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    if instances.is_empty() {
        return Err(Error::EmptySplit(split.to_owned()));
    }
    Ok(instances)
}

pub fn describe(dataset: &Dataset, split: &str, k_top: usize) -> Result<SplitStats> {
    let instances = non_empty_split(dataset, split)?;
    let mut label_counts = BTreeMap::new();
    let mut gold_values = Vec::new();
    let mut token_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut char_lens = Vec::with_capacity(instances.len());
    let mut token_lens = Vec::with_capacity(instances.len());
    for inst in &instances {
        match &inst.gold {
            Some(Gold::Label(l)) => *label_counts.entry(l.clone()).or_insert(0) += 1,
            Some(Gold::Value(v)) => gold_values.push(*v),
            None => {}
        }
        let tokens = tokenize(&inst.text);
        char_lens.push(inst.text.chars().count() as f64);
        token_lens.push(tokens.len() as f64);
        for t in tokens {
            *token_counts.entry(t).or_insert(0) += 1;
        }
    }
    let n_labelled = label_counts.values().sum::<usize>() + gold_values.len();
    Ok(SplitStats {
        split: split.to_owned(),
        n_instances: instances.len(),
        n_labelled,
        label_counts,
        gold_values: Summary::of(&gold_values),
        char_length: Summary::of(&char_lens).expect("non-empty"),
        token_length: Summary::of(&token_lens).expect("non-empty"),
        vocabulary_size: token_counts.len(),
        top_tokens: top_counts(token_counts, k_top),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    CharLen,
    TokenLen,
    Id,
}

/// Stable sort of a split's ids; ties broken by id ascending.
pub fn sort_instances(
    dataset: &Dataset,
    split: &str,
    key: SortKey,
    descending: bool,
) -> Result<Vec<String>> {
    let instances = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    let mut keyed: Vec<(usize, &str)> = instances
        .iter()
        .map(|i| {
            let k = match key {
                SortKey::CharLen => i.text.chars().count(),
                SortKey::TokenLen => tokenize(&i.text).len(),
                SortKey::Id => 0,
            };
            (k, i.id.as_str())
        })
        .collect();
    keyed.sort_by(|a, b| {
        let primary = if descending { b.0.cmp(&a.0) } else { a.0.cmp(&b.0) };
        primary.then_with(|| a.1.cmp(b.1))
    });
    if key == SortKey::Id && descending {
        keyed.reverse();
    }
    Ok(keyed.into_iter().map(|(_, id)| id.to_owned()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Label(String),
    ContainsToken(String),
    /// Inclusive character-length range.
    CharLenRange(usize, usize),
}

impl Predicate {
    fn matches(&self, inst: &Instance) -> bool {
        match self {
            Predicate::Label(l) => inst.gold.as_ref().and_then(Gold::label) == Some(l.as_str()),
            Predicate::ContainsToken(t) => {
                let needle = t.to_lowercase();
                tokenize(&inst.text).contains(&needle)
            }
            Predicate::CharLenRange(lo, hi) => {
                let n = inst.text.chars().count();
                *lo <= n && n <= *hi
            }
        }
    }
}

/// Ids of a split satisfying `predicate`, in split order.
pub fn filter_instances(dataset: &Dataset, split: &str, predicate: &Predicate) -> Result<Vec<String>> {
    if let Predicate::Label(l) = predicate {
        if dataset.label_index(l).is_none() {
            return Err(Error::UnknownLabel(l.clone()));
        }
    }
    let instances = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    Ok(instances
        .into_iter()
        .filter(|i| predicate.matches(i))
        .map(|i| i.id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Instance, Task};
    use proptest::prelude::*;

    fn dataset(rows: &[(&str, &str, Option<&str>)]) -> Dataset {
        let instances: Vec<Instance> = rows
            .iter()
            .map(|(id, t, l)| {
                let i = Instance::new(*id, *t);
                match l {
                    Some(l) => i.with_label(*l),
                    None => i,
                }
            })
            .collect();
        let ids = rows.iter().map(|r| r.0.to_string()).collect();
        Dataset::new(
            Task::Classification,
            vec!["neg".into(), "pos".into()],
            instances,
            vec![("s".into(), ids)],
        )
        .unwrap()
    }

    #[test]
    fn describe_examples() {
        let ds = dataset(&[("x", "a", None), ("y", "bb", None)]);
        let st = describe(&ds, "s", 5).unwrap();
        assert_eq!(st.char_length.mean, 1.5);
        assert_eq!(st.char_length.min, 1.0);
        assert_eq!(st.char_length.max, 2.0);
        assert_eq!(st.char_length.median, 1.5);

        let ds = dataset(&[("1", "t", Some("pos")), ("2", "t", Some("pos")), ("3", "t", Some("neg"))]);
        let st = describe(&ds, "s", 5).unwrap();
        assert_eq!(st.label_counts["pos"], 2);
        assert_eq!(st.label_counts["neg"], 1);

        let ds = dataset(&[("1", "a b", None), ("2", "b", None)]);
        let st = describe(&ds, "s", 5).unwrap();
        assert_eq!(st.vocabulary_size, 2);
        assert_eq!(st.top_tokens, vec![("b".to_string(), 2), ("a".to_string(), 1)]);
    }

    #[test]
    fn describe_errors() {
        let ds = dataset(&[("x", "a", None)]);
        assert!(matches!(describe(&ds, "nope", 3), Err(Error::UnknownSplit(_))));
        let ds = ds.assign_split("e", vec![]).unwrap();
        assert!(matches!(describe(&ds, "e", 3), Err(Error::EmptySplit(_))));
    }

    #[test]
    fn sort_examples() {
        let ds = dataset(&[("p", "bb", None), ("q", "a", None), ("r", "cc", None)]);
        assert_eq!(sort_instances(&ds, "s", SortKey::CharLen, false).unwrap(), vec!["q", "p", "r"]);
        assert_eq!(sort_instances(&ds, "s", SortKey::CharLen, true).unwrap(), vec!["p", "r", "q"]);
        assert_eq!(sort_instances(&ds, "s", SortKey::Id, true).unwrap(), vec!["r", "q", "p"]);
    }

    #[test]
    fn filter_examples() {
        let ds = dataset(&[("1", "a b", Some("pos")), ("2", "a", Some("pos")), ("3", "c", Some("neg"))]);
        assert_eq!(filter_instances(&ds, "s", &Predicate::Label("pos".into())).unwrap().len(), 2);
        assert_eq!(filter_instances(&ds, "s", &Predicate::ContainsToken("b".into())).unwrap(), vec!["1"]);
        assert!(filter_instances(&ds, "s", &Predicate::ContainsToken("zz".into())).unwrap().is_empty());
        assert!(matches!(
            filter_instances(&ds, "s", &Predicate::Label("meh".into())),
            Err(Error::UnknownLabel(_))
        ));
    }

    proptest! {
        #[test]
        fn describe_is_order_independent(texts in proptest::collection::vec("[a-d ]{0,10}", 1..10)) {
            let rows: Vec<(String, String)> = texts.iter().enumerate().map(|(i, t)| (format!("i{i}"), t.clone())).collect();
            let instances: Vec<Instance> = rows.iter().map(|(id, t)| Instance::new(id.clone(), t.clone())).collect();
            let fwd: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
            let rev: Vec<String> = fwd.iter().rev().cloned().collect();
            let ds = Dataset::new(Task::Classification, vec!["x".into()], instances, vec![("f".into(), fwd), ("r".into(), rev)]).unwrap();
            let mut a = describe(&ds, "f", 3).unwrap();
            let b = describe(&ds, "r", 3).unwrap();
            a.split = "r".into();
            prop_assert_eq!(a.top_tokens, b.top_tokens);
            prop_assert_eq!(a.vocabulary_size, b.vocabulary_size);
            prop_assert_eq!(a.char_length.median, b.char_length.median);
            prop_assert!((a.char_length.mean - b.char_length.mean).abs() < 1e-12);
            prop_assert!(a.char_length.min <= a.char_length.median && a.char_length.median <= a.char_length.max);
        }

        #[test]
        fn filter_is_idempotent(texts in proptest::collection::vec("[a-c ]{0,8}", 1..10)) {
            let instances: Vec<Instance> = texts.iter().enumerate().map(|(i, t)| Instance::new(format!("i{i}"), t.clone())).collect();
            let ids: Vec<String> = instances.iter().map(|i| i.id.clone()).collect();
            let ds = Dataset::new(Task::Classification, vec!["x".into()], instances, vec![("s".into(), ids)]).unwrap();
            let pred = Predicate::ContainsToken("a".into());
            let once = filter_instances(&ds, "s", &pred).unwrap();
            let ds2 = ds.assign_split("f", once.clone()).unwrap();
            prop_assert_eq!(filter_instances(&ds2, "f", &pred).unwrap(), once);
        }
    }
}
