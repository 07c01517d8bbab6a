//! Model performance metrics and correct/incorrect drill-down.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bridge::{argmax, Predictor};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Gold, Task};

/// Citation strings attached to every metrics table.
pub fn metric_references(task: Task) -> BTreeMap<String, String> {
    let refs: &[(&str, &str)] = match task {
        Task::Classification => &[
            ("accuracy", "Fraction of instances whose argmax prediction equals the gold label; see Sokolova & Lapalme (2009), A systematic analysis of performance measures for classification tasks."),
            ("precision", "tp / (tp + fp) per label; Sokolova & Lapalme (2009). 0/0 is reported as 0 and flagged."),
            ("recall", "tp / (tp + fn) per label; Sokolova & Lapalme (2009). 0/0 is reported as 0 and flagged."),
            ("f1", "Harmonic mean of precision and recall; van Rijsbergen (1979), Information Retrieval."),
            ("macro", "Unweighted mean of per-label scores; Sokolova & Lapalme (2009)."),
            ("micro", "Scores from counts pooled over labels; equals accuracy for single-label classification."),
            ("weighted", "Per-label scores averaged with gold-support weights; as in scikit-learn's `average='weighted'`."),
        ],
        Task::Regression => &[
            ("mae", "Mean absolute error, mean of |y - y_hat|; Willmott & Matsuura (2005)."),
            ("mse", "Mean squared error, mean of (y - y_hat)^2."),
            ("rmse", "Root mean squared error, sqrt(MSE); Hyndman & Koehler (2006)."),
            ("r2", "Coefficient of determination 1 - SS_res / SS_tot; undefined (flagged) when the gold values are constant."),
        ],
    };
    refs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// Indexed `[gold][pred]`.
    pub counts: Vec<Vec<usize>>,
    pub unlabelled: usize,
}

impl ConfusionMatrix {
    pub fn from_pairs(labels: Vec<String>, pairs: &[(usize, usize)]) -> Self {
        let k = labels.len();
        let mut counts = vec![vec![0; k]; k];
        for &(g, p) in pairs {
            counts[g][p] += 1;
        }
        ConfusionMatrix {
            labels,
            counts,
            unlabelled: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Per-instance (gold, predicted) pair for a labelled split.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub gold: Option<usize>,
    pub pred: usize,
    pub row: Vec<f64>,
}

/// Predict every instance of a classification split.
pub fn score_split(dataset: &Dataset, split: &str, predictor: &Predictor) -> Result<Vec<Scored>> {
    if dataset.task() != Task::Classification || predictor.task() != Task::Classification {
        return Err(Error::TaskMismatch("classification required".into()));
    }
    let instances = dataset
        .split_instances(split)
        .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
    let texts: Vec<String> = instances.iter().map(|i| i.text.clone()).collect();
    let batch = predictor.predict(&texts)?;
    Ok(instances
        .iter()
        .zip(batch.outputs)
        .map(|(inst, row)| Scored {
            id: inst.id.clone(),
            gold: inst.gold.as_ref().and_then(Gold::label).and_then(|l| dataset.label_index(l)),
            pred: argmax(&row),
            row,
        })
        .collect())
}

pub fn confusion(dataset: &Dataset, split: &str, predictor: &Predictor) -> Result<ConfusionMatrix> {
    let scored = score_split(dataset, split, predictor)?;
    let pairs: Vec<(usize, usize)> = scored.iter().filter_map(|s| Some((s.gold?, s.pred))).collect();
    if pairs.is_empty() {
        return Err(Error::Degenerate(format!("split `{split}` has no labelled instances")));
    }
    let mut cm = ConfusionMatrix::from_pairs(dataset.labels().to_vec(), &pairs);
    cm.unlabelled = scored.len() - pairs.len();
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_label: BTreeMap<String, LabelScores>,
    pub macro_avg: Averages,
    pub micro_avg: Averages,
    pub weighted_avg: Averages,
    /// Metrics that hit a 0/0 and were reported as 0, e.g. `precision:neg`.
    pub zero_division: Vec<String>,
    pub references: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionMetrics {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the gold values are constant.
    pub r2: Option<f64>,
    pub r2_undefined: bool,
    pub references: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum MetricsTable {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

fn ratio(num: f64, den: f64, flag: String, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(flag);
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Degenerate("empty confusion matrix".into()));
    }
    let k = cm.labels.len();
    let mut flags = Vec::new();
    let mut per_label = BTreeMap::new();
    let (mut fp_sum, mut fn_sum) = (0usize, 0usize);
    let (mut tp_sum, mut macro_p, mut macro_r, mut macro_f) = (0usize, 0.0, 0.0, 0.0);
    let (mut w_p, mut w_r, mut w_f) = (0.0, 0.0, 0.0);
    for l in 0..k {
        let tp = cm.counts[l][l];
        let pred_total: usize = (0..k).map(|g| cm.counts[g][l]).sum();
        let support: usize = cm.counts[l].iter().sum();
        let name = &cm.labels[l];
        let p = ratio(tp as f64, pred_total as f64, format!("precision:{name}"), &mut flags);
        let r = ratio(tp as f64, support as f64, format!("recall:{name}"), &mut flags);
        let f = if pred_total + support == 0 {
            flags.push(format!("f1:{name}"));
            0.0
        } else {
            f1(p, r)
        };
        tp_sum += tp;
        fp_sum += pred_total - tp;
        fn_sum += support - tp;
        macro_p += p;
        macro_r += r;
        macro_f += f;
        let w = support as f64 / total as f64;
        w_p += w * p;
        w_r += w * r;
        w_f += w * f;
        per_label.insert(
            name.clone(),
            LabelScores {
                precision: p,
                recall: r,
                f1: f,
                support,
            },
        );
    }
    let accuracy = tp_sum as f64 / total as f64;
    let micro_p = tp_sum as f64 / (tp_sum + fp_sum) as f64;
    let micro_r = tp_sum as f64 / (tp_sum + fn_sum) as f64;
    Ok(ClassificationMetrics {
        accuracy,
        per_label,
        macro_avg: Averages {
            precision: macro_p / k as f64,
            recall: macro_r / k as f64,
            f1: macro_f / k as f64,
        },
        micro_avg: Averages {
            precision: micro_p,
            recall: micro_r,
            f1: f1(micro_p, micro_r),
        },
        weighted_avg: Averages {
            precision: w_p,
            recall: w_r,
            f1: w_f,
        },
        zero_division: flags,
        references: metric_references(Task::Classification),
    })
}

pub fn regression_metrics(gold: &[f64], pred: &[f64]) -> Result<RegressionMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} gold vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("no values to score"));
    }
    if gold.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value"));
    }
    let n = gold.len() as f64;
    let mae = gold.iter().zip(pred).map(|(g, p)| (g - p).abs()).sum::<f64>() / n;
    let ss_res: f64 = gold.iter().zip(pred).map(|(g, p)| (g - p).powi(2)).sum();
    let mean = gold.iter().sum::<f64>() / n;
    let ss_tot: f64 = gold.iter().map(|g| (g - mean).powi(2)).sum();
    let mse = ss_res / n;
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok(RegressionMetrics {
        n: gold.len(),
        mae,
        mse,
        rmse: mse.sqrt(),
        r2,
        r2_undefined: r2.is_none(),
        references: metric_references(Task::Regression),
    })
}

/// Metrics for a split, dispatching on the dataset task.
pub fn examine(dataset: &Dataset, split: &str, predictor: &Predictor) -> Result<MetricsTable> {
    match dataset.task() {
        Task::Classification => Ok(MetricsTable::Classification(classification_metrics(
            &confusion(dataset, split, predictor)?,
        )?)),
        Task::Regression => {
            if predictor.task() != Task::Regression {
                return Err(Error::TaskMismatch("regression dataset needs a regression model".into()));
            }
            let instances = dataset
                .split_instances(split)
                .map_err(|_| Error::UnknownSplit(split.to_owned()))?;
            let labelled: Vec<_> = instances
                .iter()
                .filter_map(|i| Some((i.gold.as_ref()?.value()?, i.text.clone())))
                .collect();
            let texts: Vec<String> = labelled.iter().map(|(_, t)| t.clone()).collect();
            let preds = predictor.predict(&texts)?;
            let gold: Vec<f64> = labelled.iter().map(|(g, _)| *g).collect();
            let pred: Vec<f64> = preds.outputs.iter().map(|r| r[0]).collect();
            Ok(MetricsTable::Regression(regression_metrics(&gold, &pred)?))
        }
    }
}

/// Ids in split order whose (gold, predicted) labels equal `cell`.
pub fn drilldown(
    dataset: &Dataset,
    split: &str,
    predictor: &Predictor,
    gold: &str,
    pred: &str,
) -> Result<Vec<String>> {
    let g = dataset
        .label_index(gold)
        .ok_or_else(|| Error::UnknownLabel(gold.to_owned()))?;
    let p = dataset
        .label_index(pred)
        .ok_or_else(|| Error::UnknownLabel(pred.to_owned()))?;
    Ok(score_split(dataset, split, predictor)?
        .into_iter()
        .filter(|s| s.gold == Some(g) && s.pred == p)
        .map(|s| s.id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::LexiconModel;
    use crate::ingest::Instance;

    fn ab() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn confusion_fixture() {
        let cm = ConfusionMatrix::from_pairs(ab(), &[(0, 0), (0, 1), (1, 1)]);
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 2.0 / 3.0);
        assert_eq!(m.per_label["A"].precision, 1.0);
        assert_eq!(m.per_label["A"].recall, 0.5);
        assert_eq!(m.per_label["A"].f1, 2.0 / 3.0);
        assert_eq!(m.per_label["B"].precision, 0.5);
        assert_eq!(m.per_label["B"].recall, 1.0);
        assert!(m.zero_division.is_empty());
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_pairs(ab(), &[(0, 0), (1, 1), (1, 1)]);
        let m = classification_metrics(&cm).unwrap();
        for s in m.per_label.values() {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(m.macro_avg.f1, 1.0);
        assert_eq!(m.weighted_avg.f1, 1.0);
    }

    #[test]
    fn zero_division_flagged() {
        let labels = vec!["A".into(), "B".into(), "C".into()];
        let cm = ConfusionMatrix::from_pairs(labels, &[(0, 0), (1, 1)]);
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.per_label["C"].precision, 0.0);
        assert_eq!(m.per_label["C"].recall, 0.0);
        assert_eq!(m.per_label["C"].f1, 0.0);
        assert!(m.zero_division.contains(&"precision:C".to_string()));
        assert!(m.zero_division.contains(&"recall:C".to_string()));
        assert!(classification_metrics(&ConfusionMatrix::from_pairs(ab(), &[])).is_err());
    }

    #[test]
    fn regression_examples() {
        let m = regression_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.r2), (0.0, Some(1.0)));
        let m = regression_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.r2, Some(0.0));
        assert_eq!(m.rmse, m.mse.sqrt());
        let m = regression_metrics(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!(m.r2_undefined);
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(regression_metrics(&[], &[]).is_err());
    }

    #[test]
    fn tie_goes_to_first_label() {
        let model = LexiconModel::binary(["A", "B"], 0.5, BTreeMap::new());
        let ds = Dataset::new(
            Task::Classification,
            ab(),
            vec![Instance::new("x", "whatever").with_label("B")],
            vec![("s".into(), vec!["x".into()])],
        )
        .unwrap();
        let cm = confusion(&ds, "s", &Predictor::new(model)).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn drilldown_partitions_labelled_ids() {
        // score = 0.9 when "b" present: predicts B; else A
        let w: BTreeMap<String, f64> = [("b".to_string(), 0.8)].into();
        let p = Predictor::new(LexiconModel::binary(["A", "B"], 0.1, w));
        let ds = Dataset::new(
            Task::Classification,
            ab(),
            vec![
                Instance::new("i1", "a").with_label("A"),
                Instance::new("i2", "b").with_label("A"),
                Instance::new("i3", "b").with_label("B"),
                Instance::new("i4", "b"),
            ],
            vec![("s".into(), vec!["i1".into(), "i2".into(), "i3".into(), "i4".into()])],
        )
        .unwrap();
        let cm = confusion(&ds, "s", &p).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.unlabelled, 1);
        assert_eq!(drilldown(&ds, "s", &p, "A", "B").unwrap(), vec!["i2"]);
        assert!(drilldown(&ds, "s", &p, "B", "A").unwrap().is_empty());
        let mut all: Vec<String> = Vec::new();
        for g in ["A", "B"] {
            for q in ["A", "B"] {
                all.extend(drilldown(&ds, "s", &p, g, q).unwrap());
            }
        }
        all.sort();
        assert_eq!(all, vec!["i1", "i2", "i3"]);
        assert!(matches!(drilldown(&ds, "s", &p, "Z", "A"), Err(Error::UnknownLabel(_))));
    }
}
