//! Token-level global summaries: per-label document frequencies and
//! mutual information between token presence and the predicted label.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bridge::{argmax, Predictor};
use crate::error::{Error, Result};
use crate::explore::top_counts;
use crate::ingest::{tokenize, Dataset, Gold, Task};

use super::{GlobalKind, GlobalPayload, GlobalSummary, LabelSource};

/// Label per instance of a split: gold, or argmax prediction when a
/// predictor is given. Unlabelled instances map to `None`.
pub fn split_labels(
    dataset: &Dataset,
    split: &str,
    predictor: Option<&Predictor>,
) -> Result<Vec<(String, String, Option<usize>)>> {
    if dataset.task() != Task::Classification {
        return Err(Error::TaskMismatch("token summaries need a classification task".into()));
    }
    let instances = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    if instances.is_empty() {
        return Err(Error::EmptySplit(split.to_owned()));
    }
    let labels: Vec<Option<usize>> = match predictor {
        Some(p) => {
            let texts: Vec<String> = instances.iter().map(|i| i.text.clone()).collect();
            p.predict(&texts)?.outputs.iter().map(|r| Some(argmax(r))).collect()
        }
        None => instances
            .iter()
            .map(|i| i.gold.as_ref().and_then(Gold::label).and_then(|l| dataset.label_index(l)))
            .collect(),
    };
    Ok(instances
        .iter()
        .zip(labels)
        .map(|(i, l)| (i.id.clone(), i.text.clone(), l))
        .collect())
}

/// Top-`k` tokens per label by document frequency; ties lexicographic.
pub fn token_frequency(
    dataset: &Dataset,
    split: &str,
    predictor: Option<&Predictor>,
    k: usize,
) -> Result<GlobalSummary> {
    let rows = split_labels(dataset, split, predictor)?;
    let mut per_label: BTreeMap<String, BTreeMap<String, usize>> = dataset
        .labels()
        .iter()
        .map(|l| (l.clone(), BTreeMap::new()))
        .collect();
    for (_, text, label) in &rows {
        let Some(label) = label else { continue };
        let present: BTreeSet<String> = tokenize(text).into_iter().collect();
        let counts = per_label.get_mut(&dataset.labels()[*label]).expect("known label");
        for t in present {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    Ok(GlobalSummary {
        kind: GlobalKind::TokenFrequency,
        split: split.to_owned(),
        label_source: if predictor.is_some() { LabelSource::Predicted } else { LabelSource::Gold },
        payload: GlobalPayload::TokenFrequency {
            per_label: per_label
                .into_iter()
                .map(|(l, counts)| (l, top_counts(counts, k)))
                .collect(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenScore {
    pub token: String,
    pub bits: f64,
}

fn plogp_ratio(joint: f64, pt: f64, py: f64) -> f64 {
    if joint == 0.0 {
        0.0
    } else {
        joint * (joint / (pt * py)).log2()
    }
}

/// Plug-in mutual information `I(T; Y)` in bits from a token-presence by
/// label contingency table. `present[y]` counts documents with the token
/// and label `y`; `totals[y]` counts all documents with label `y`.
pub fn mutual_information(present: &[usize], totals: &[usize]) -> f64 {
    let n: usize = totals.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p_t1 = present.iter().sum::<usize>() as f64 / n;
    let p_t0 = 1.0 - p_t1;
    let mut mi = 0.0;
    for (y, &tot) in totals.iter().enumerate() {
        let py = tot as f64 / n;
        let j1 = present[y] as f64 / n;
        let j0 = (tot - present[y]) as f64 / n;
        mi += plogp_ratio(j1, p_t1, py) + plogp_ratio(j0, p_t0, py);
    }
    mi.max(0.0)
}

/// Tokens ranked by mutual information with the predicted label.
pub fn token_information(
    dataset: &Dataset,
    split: &str,
    predictor: &Predictor,
    k: Option<usize>,
) -> Result<GlobalSummary> {
    let rows = split_labels(dataset, split, Some(predictor))?;
    let n_labels = dataset.labels().len();
    let mut totals = vec![0usize; n_labels];
    let mut present: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (_, text, label) in &rows {
        let y = label.expect("predicted labels are always present");
        totals[y] += 1;
        for t in tokenize(text).into_iter().collect::<BTreeSet<_>>() {
            present.entry(t).or_insert_with(|| vec![0; n_labels])[y] += 1;
        }
    }
    let mut scores: Vec<TokenScore> = present
        .into_iter()
        .map(|(token, counts)| TokenScore {
            bits: mutual_information(&counts, &totals),
            token,
        })
        .collect();
    scores.sort_by(|a, b| b.bits.total_cmp(&a.bits).then_with(|| a.token.cmp(&b.token)));
    if let Some(k) = k {
        scores.truncate(k);
    }
    Ok(GlobalSummary {
        kind: GlobalKind::TokenInformation,
        split: split.to_owned(),
        label_source: LabelSource::Predicted,
        payload: GlobalPayload::TokenInformation { tokens: scores },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::train_baseline;
    use crate::ingest::Instance;

    fn ds(rows: &[(&str, &str)]) -> Dataset {
        let instances: Vec<Instance> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, l))| Instance::new(format!("d{i}"), *t).with_label(*l))
            .collect();
        let ids = instances.iter().map(|i| i.id.clone()).collect();
        Dataset::new(Task::Classification, vec![], instances, vec![("s".into(), ids)]).unwrap()
    }

    #[test]
    fn frequency_counts_documents() {
        let d = ds(&[("a b", "pos"), ("a", "neg")]);
        let s = token_frequency(&d, "s", None, 10).unwrap();
        let GlobalPayload::TokenFrequency { per_label } = s.payload else { panic!() };
        assert_eq!(per_label["pos"], vec![("a".to_string(), 1), ("b".to_string(), 1)]);
        assert_eq!(per_label["neg"], vec![("a".to_string(), 1)]);
        let s = token_frequency(&d, "s", None, 1).unwrap();
        let GlobalPayload::TokenFrequency { per_label } = s.payload else { panic!() };
        assert_eq!(per_label["pos"].len(), 1);
    }

    #[test]
    fn frequency_with_predictor_uses_predictions() {
        let d = ds(&[("good", "pos"), ("bad", "neg"), ("good stuff", "neg")]);
        let p = train_baseline(&d.clone().assign_split("t", vec!["d0".into(), "d1".into()]).unwrap(), "t").unwrap();
        let s = token_frequency(&d, "s", Some(&p), 10).unwrap();
        assert_eq!(s.label_source, LabelSource::Predicted);
        let GlobalPayload::TokenFrequency { per_label } = s.payload else { panic!() };
        assert!(per_label["pos"].contains(&("stuff".to_string(), 1)));
    }

    #[test]
    fn mi_examples() {
        assert_eq!(mutual_information(&[0, 1], &[1, 1]), 1.0);
        assert_eq!(mutual_information(&[3, 2], &[3, 2]), 0.0);
    }
}
