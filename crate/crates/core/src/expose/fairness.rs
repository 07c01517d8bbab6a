//! Group fairness metrics over a protected attribute.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bridge::{argmax, Predictor};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Gold, Instance, Task};

/// One classified instance: its group, whether the prediction is the
/// positive label, and whether the gold label is (if known).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub group: String,
    pub predicted_positive: bool,
    pub gold_positive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegRecord {
    pub group: String,
    pub prediction: f64,
    pub gold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassGroupStats {
    pub group: String,
    pub n: usize,
    pub n_labelled: usize,
    pub positive_rate: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationFairness {
    pub attribute: String,
    pub positive_label: String,
    pub groups: Vec<ClassGroupStats>,
    /// Requested groups without instances.
    pub excluded_groups: Vec<String>,
    pub n_missing_attribute: usize,
    pub demographic_parity_diff: f64,
    pub demographic_parity_ratio: f64,
    /// Set when every group has a zero positive rate (ratio reported as 1).
    pub demographic_parity_ratio_undefined: bool,
    /// `None` when fewer than two groups have gold positives.
    pub equal_opportunity_diff: Option<f64>,
    pub equalized_odds_diff: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegGroupStats {
    pub group: String,
    pub n: usize,
    pub n_labelled: usize,
    pub mean_prediction: f64,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFairness {
    pub attribute: String,
    pub loss: LossKind,
    pub groups: Vec<RegGroupStats>,
    pub excluded_groups: Vec<String>,
    pub n_missing_attribute: usize,
    /// Largest per-group loss; `None` without gold values.
    pub group_loss_max: Option<f64>,
    pub dp_ks_diff: f64,
    /// Global prediction deciles at which the CDFs are compared.
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum FairnessReport {
    Classification(ClassificationFairness),
    Regression(RegressionFairness),
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Group records by name, keeping only `requested` groups when given.
/// Returns the groups in name order and the requested groups that were empty.
/// Records per kept group, plus the names of excluded groups.
type Partition<'a, R> = (BTreeMap<String, Vec<&'a R>>, Vec<String>);

fn partition<'a, R>(
    records: &'a [R],
    group_of: impl Fn(&R) -> &str,
    requested: Option<&[String]>,
) -> Result<Partition<'a, R>> {
    let mut groups: BTreeMap<String, Vec<&R>> = BTreeMap::new();
    if let Some(req) = requested {
        for g in req {
            groups.insert(g.clone(), Vec::new());
        }
    }
    for r in records {
        let g = group_of(r);
        match groups.get_mut(g) {
            Some(members) => members.push(r),
            None if requested.is_none() => groups.entry(g.to_owned()).or_default().push(r),
            None => {}
        }
    }
    let excluded: Vec<String> = groups
        .iter()
        .filter(|(_, m)| m.is_empty())
        .map(|(g, _)| g.clone())
        .collect();
    groups.retain(|_, m| !m.is_empty());
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "fairness needs at least two nonempty groups, found {}",
            groups.len()
        )));
    }
    Ok((groups, excluded))
}

fn max_pairwise_gap(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return None;
    }
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max - min)
}

pub fn classification_fairness(
    attribute: &str,
    positive_label: &str,
    records: &[ClassRecord],
    requested: Option<&[String]>,
) -> Result<ClassificationFairness> {
    let (groups, excluded_groups) = partition(records, |r| &r.group, requested)?;
    let stats: Vec<ClassGroupStats> = groups
        .iter()
        .map(|(g, members)| {
            let n = members.len();
            let predicted = members.iter().filter(|r| r.predicted_positive).count();
            let labelled: Vec<&&ClassRecord> = members.iter().filter(|r| r.gold_positive.is_some()).collect();
            let (mut tp, mut fp, mut pos, mut neg, mut correct) = (0, 0, 0, 0, 0);
            for r in &labelled {
                let gold = r.gold_positive.unwrap();
                if gold {
                    pos += 1;
                    tp += usize::from(r.predicted_positive);
                } else {
                    neg += 1;
                    fp += usize::from(r.predicted_positive);
                }
                correct += usize::from(gold == r.predicted_positive);
            }
            ClassGroupStats {
                group: g.clone(),
                n,
                n_labelled: labelled.len(),
                positive_rate: predicted as f64 / n as f64,
                tpr: ratio(tp, pos),
                fpr: ratio(fp, neg),
                accuracy: ratio(correct, labelled.len()),
            }
        })
        .collect();
    let rates: Vec<f64> = stats.iter().map(|s| s.positive_rate).collect();
    let max_rate = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_undefined = max_rate == 0.0;
    let tprs: Vec<Option<f64>> = stats.iter().map(|s| s.tpr).collect();
    let mut odds: Option<f64> = None;
    for (i, a) in stats.iter().enumerate() {
        for b in &stats[i + 1..] {
            let gaps = [
                a.tpr.zip(b.tpr).map(|(x, y)| (x - y).abs()),
                a.fpr.zip(b.fpr).map(|(x, y)| (x - y).abs()),
            ];
            if let Some(gap) = gaps.iter().flatten().copied().reduce(f64::max) {
                odds = Some(odds.map_or(gap, |o| o.max(gap)));
            }
        }
    }
    Ok(ClassificationFairness {
        attribute: attribute.to_owned(),
        positive_label: positive_label.to_owned(),
        groups: stats,
        excluded_groups,
        n_missing_attribute: 0,
        demographic_parity_diff: max_rate - min_rate,
        demographic_parity_ratio: if ratio_undefined { 1.0 } else { min_rate / max_rate },
        demographic_parity_ratio_undefined: ratio_undefined,
        equal_opportunity_diff: max_pairwise_gap(&tprs),
        equalized_odds_diff: odds,
        warnings: Vec::new(),
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Deciles 0.1, ..., 0.9 of the data; the 0.5 point is the median.
pub fn decile_grid(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..10)
        .map(|k| quantile_sorted(&sorted, k as f64 / 10.0))
        .collect()
}

fn ecdf(values: &[f64], z: f64) -> f64 {
    values.iter().filter(|v| **v <= z).count() as f64 / values.len() as f64
}

/// `max_g max_z |F_g(z) - F(z)|` over the given grid.
pub fn ks_against_pooled(groups: &[Vec<f64>], grid: &[f64]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    grid.iter()
        .flat_map(|z| groups.iter().map(|g| (ecdf(g, *z) - ecdf(&pooled, *z)).abs()))
        .fold(0.0, f64::max)
}

pub fn regression_fairness(
    attribute: &str,
    loss: LossKind,
    records: &[RegRecord],
    requested: Option<&[String]>,
) -> Result<RegressionFairness> {
    let (groups, excluded_groups) = partition(records, |r| &r.group, requested)?;
    let stats: Vec<RegGroupStats> = groups
        .iter()
        .map(|(g, members)| {
            let n = members.len();
            let errors: Vec<f64> = members
                .iter()
                .filter_map(|r| r.gold.map(|y| r.prediction - y))
                .collect();
            let m = errors.len();
            RegGroupStats {
                group: g.clone(),
                n,
                n_labelled: m,
                mean_prediction: members.iter().map(|r| r.prediction).sum::<f64>() / n as f64,
                mae: (m > 0).then(|| errors.iter().map(|e| e.abs()).sum::<f64>() / m as f64),
                mse: (m > 0).then(|| errors.iter().map(|e| e * e).sum::<f64>() / m as f64),
            }
        })
        .collect();
    let group_loss_max = stats
        .iter()
        .filter_map(|s| match loss {
            LossKind::Mae => s.mae,
            LossKind::Mse => s.mse,
        })
        .reduce(f64::max);
    let preds: Vec<Vec<f64>> = groups
        .values()
        .map(|members| members.iter().map(|r| r.prediction).collect())
        .collect();
    let grid = decile_grid(&preds.concat());
    Ok(RegressionFairness {
        attribute: attribute.to_owned(),
        loss,
        groups: stats,
        excluded_groups,
        n_missing_attribute: 0,
        group_loss_max,
        dp_ks_diff: ks_against_pooled(&preds, &grid),
        grid,
    })
}

type Scored<'a> = (Vec<&'a Instance>, usize, Vec<Vec<f64>>);

/// Split instances carrying `attribute`, the number without it, and their predictions.
fn attributed<'a>(
    dataset: &'a Dataset,
    split: &str,
    attribute: &str,
    predictor: &Predictor,
) -> Result<Scored<'a>> {
    let all = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    if all.is_empty() {
        return Err(Error::EmptySplit(split.to_owned()));
    }
    let (with, without): (Vec<&Instance>, Vec<&Instance>) =
        all.into_iter().partition(|i| i.attributes.contains_key(attribute));
    if with.is_empty() {
        return Err(Error::invalid(format!("attribute `{attribute}` is missing on every instance")));
    }
    let texts: Vec<String> = with.iter().map(|i| i.text.clone()).collect();
    let outputs = predictor.predict(&texts)?.outputs;
    Ok((with, without.len(), outputs))
}

pub fn fairness_classification(
    dataset: &Dataset,
    split: &str,
    predictor: &Predictor,
    attribute: &str,
    positive_label: Option<&str>,
    groups: Option<&[String]>,
) -> Result<ClassificationFairness> {
    if dataset.task() != Task::Classification || predictor.task() != Task::Classification {
        return Err(Error::TaskMismatch("classification fairness needs a classification task".into()));
    }
    let labels = predictor.labels();
    let mut warnings = Vec::new();
    let positive = match positive_label {
        Some(l) => labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::UnknownLabel(l.to_owned()))?,
        None => {
            let last = labels.len() - 1;
            warnings.push(format!("positive label defaulted to the last label `{}`", labels[last]));
            last
        }
    };
    let (instances, missing, outputs) = attributed(dataset, split, attribute, predictor)?;
    let records: Vec<ClassRecord> = instances
        .iter()
        .zip(outputs)
        .map(|(inst, out)| ClassRecord {
            group: inst.attributes[attribute].clone(),
            predicted_positive: argmax(&out) == positive,
            gold_positive: inst.gold.as_ref().and_then(Gold::label).map(|g| g == labels[positive]),
        })
        .collect();
    let mut report = classification_fairness(attribute, &labels[positive], &records, groups)?;
    report.n_missing_attribute = missing;
    report.warnings = warnings;
    Ok(report)
}

pub fn fairness_regression(
    dataset: &Dataset,
    split: &str,
    predictor: &Predictor,
    attribute: &str,
    loss: LossKind,
    groups: Option<&[String]>,
) -> Result<RegressionFairness> {
    if dataset.task() != Task::Regression || predictor.task() != Task::Regression {
        return Err(Error::TaskMismatch("regression fairness needs a regression task".into()));
    }
    let (instances, missing, outputs) = attributed(dataset, split, attribute, predictor)?;
    let records: Vec<RegRecord> = instances
        .iter()
        .zip(outputs)
        .map(|(inst, out)| RegRecord {
            group: inst.attributes[attribute].clone(),
            prediction: out[0],
            gold: inst.gold.as_ref().and_then(Gold::value),
        })
        .collect();
    let mut report = regression_fairness(attribute, loss, &records, groups)?;
    report.n_missing_attribute = missing;
    Ok(report)
}

/// Fairness report for whichever task the dataset has, with default settings.
pub fn fairness(dataset: &Dataset, split: &str, predictor: &Predictor, attribute: &str) -> Result<FairnessReport> {
    match dataset.task() {
        Task::Classification => {
            fairness_classification(dataset, split, predictor, attribute, None, None).map(FairnessReport::Classification)
        }
        Task::Regression => {
            fairness_regression(dataset, split, predictor, attribute, LossKind::Mae, None).map(FairnessReport::Regression)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(group: &str, pred: bool, gold: Option<bool>) -> ClassRecord {
        ClassRecord {
            group: group.into(),
            predicted_positive: pred,
            gold_positive: gold,
        }
    }

    #[test]
    fn parity_fixture() {
        let mut records = Vec::new();
        for p in [true, true, false, false] {
            records.push(rec("g1", p, None));
        }
        for p in [true, false, false, false] {
            records.push(rec("g2", p, None));
        }
        let r = classification_fairness("a", "pos", &records, None).unwrap();
        assert_eq!(r.demographic_parity_diff, 0.25);
        assert_eq!(r.demographic_parity_ratio, 0.5);
        assert_eq!(r.equal_opportunity_diff, None);
    }

    #[test]
    fn symmetric_groups_have_zero_gaps() {
        let mut records = Vec::new();
        for g in ["x", "y"] {
            records.push(rec(g, true, Some(true)));
            records.push(rec(g, false, Some(true)));
            records.push(rec(g, true, Some(false)));
        }
        let r = classification_fairness("a", "pos", &records, None).unwrap();
        assert_eq!(r.demographic_parity_diff, 0.0);
        assert_eq!(r.demographic_parity_ratio, 1.0);
        assert_eq!(r.equal_opportunity_diff, Some(0.0));
        assert_eq!(r.equalized_odds_diff, Some(0.0));
        assert_eq!(r.groups[0].tpr, Some(0.5));
        assert_eq!(r.groups[0].fpr, Some(1.0));
    }

    #[test]
    fn empty_groups_are_excluded_and_listed() {
        let records = vec![rec("x", false, None), rec("y", false, None)];
        let req = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let r = classification_fairness("a", "pos", &records, Some(&req)).unwrap();
        assert_eq!(r.excluded_groups, vec!["z"]);
        assert_eq!(r.groups.len(), 2);
        assert!(r.demographic_parity_ratio_undefined);
        assert_eq!(r.demographic_parity_ratio, 1.0);
        assert!(classification_fairness("a", "pos", &records[..1], None).is_err());
    }

    #[test]
    fn equalized_odds_takes_the_larger_gap() {
        let records = vec![
            rec("x", true, Some(true)),
            rec("x", false, Some(false)),
            rec("y", true, Some(true)),
            rec("y", true, Some(false)),
        ];
        let r = classification_fairness("a", "pos", &records, None).unwrap();
        assert_eq!(r.equal_opportunity_diff, Some(0.0));
        assert_eq!(r.equalized_odds_diff, Some(1.0));
    }

    fn reg(group: &str, p: f64, gold: Option<f64>) -> RegRecord {
        RegRecord {
            group: group.into(),
            prediction: p,
            gold,
        }
    }

    #[test]
    fn regression_ks_fixture() {
        let records = vec![reg("a", 0.0, Some(0.0)), reg("a", 0.0, Some(0.0)), reg("b", 1.0, Some(1.0)), reg("b", 1.0, Some(1.0))];
        let r = regression_fairness("g", LossKind::Mae, &records, None).unwrap();
        assert_eq!(r.dp_ks_diff, 0.5);
        assert_eq!(r.grid[4], 0.5);
        assert_eq!(r.group_loss_max, Some(0.0));
    }

    #[test]
    fn regression_losses() {
        let records = vec![reg("a", 1.0, Some(0.0)), reg("a", 3.0, None), reg("b", 0.0, Some(2.0))];
        let r = regression_fairness("g", LossKind::Mse, &records, None).unwrap();
        assert_eq!(r.groups[0].mean_prediction, 2.0);
        assert_eq!(r.groups[0].n_labelled, 1);
        assert_eq!(r.group_loss_max, Some(4.0));
    }

    proptest! {
        #[test]
        fn identical_multisets_give_zero_ks(preds in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let mut records: Vec<RegRecord> = preds.iter().map(|p| reg("a", *p, None)).collect();
            records.extend(preds.iter().rev().map(|p| reg("b", *p, None)));
            let r = regression_fairness("g", LossKind::Mae, &records, None).unwrap();
            prop_assert_eq!(r.dp_ks_diff, 0.0);
        }

        #[test]
        fn parity_ignores_group_names_and_order(
            flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 2..30),
        ) {
            let records: Vec<ClassRecord> = flags.iter().enumerate()
                .map(|(i, (p, g))| rec(if i % 2 == 0 { "u" } else { "v" }, *p, Some(*g)))
                .collect();
            let renamed: Vec<ClassRecord> = records.iter().rev()
                .map(|r| rec(if r.group == "u" { "zz" } else { "aa" }, r.predicted_positive, r.gold_positive))
                .collect();
            let a = classification_fairness("x", "pos", &records, None).unwrap();
            let b = classification_fairness("x", "pos", &renamed, None).unwrap();
            prop_assert_eq!(a.demographic_parity_diff, b.demographic_parity_diff);
            prop_assert_eq!(a.equal_opportunity_diff, b.equal_opportunity_diff);
            prop_assert_eq!(a.equalized_odds_diff, b.equalized_odds_diff);
            prop_assert!((0.0..=1.0).contains(&a.demographic_parity_diff));
        }
    }
}
