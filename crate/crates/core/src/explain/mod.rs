//! Local attributions and global summaries.

pub mod kmedoids;
pub mod local;
pub mod mmd;
pub mod sampling;
pub mod shapley;
pub mod tokens;
pub mod wls;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bridge::Predictor;
use crate::error::{Error, Result};
use crate::ingest::{build_tfidf, Dataset, TfidfIndex};
use crate::par::Exec;

pub use local::{
    exact_shapley, explain_instance, kernel_shap, lime, AttributionMethod, AttributionResult, LimeParams,
    ShapParams,
};
pub use tokens::{token_frequency, token_information, TokenScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalKind {
    TokenFrequency,
    TokenInformation,
    Prototypes,
    PrototypesCriticisms,
}

impl GlobalKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "token-frequency" => Some(GlobalKind::TokenFrequency),
            "token-information" => Some(GlobalKind::TokenInformation),
            "prototypes" => Some(GlobalKind::Prototypes),
            "prototypes-criticisms" | "criticisms" => Some(GlobalKind::PrototypesCriticisms),
            _ => None,
        }
    }
}

/// Where the per-label grouping came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Gold,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrototypeGroup {
    pub ids: Vec<String>,
    pub medoids: Vec<String>,
    pub cost: f64,
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criticism {
    pub id: String,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticismGroup {
    pub ids: Vec<String>,
    pub prototypes: Vec<String>,
    pub criticisms: Vec<Criticism>,
    pub gamma: f64,
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum GlobalPayload {
    TokenFrequency {
        per_label: BTreeMap<String, Vec<(String, usize)>>,
    },
    TokenInformation {
        tokens: Vec<TokenScore>,
    },
    Prototypes {
        k: usize,
        global: PrototypeGroup,
        per_label: BTreeMap<String, PrototypeGroup>,
    },
    PrototypesCriticisms {
        m_p: usize,
        m_c: usize,
        regularizer: &'static str,
        global: CriticismGroup,
        per_label: BTreeMap<String, CriticismGroup>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalSummary {
    pub kind: GlobalKind,
    pub split: String,
    pub label_source: LabelSource,
    pub payload: GlobalPayload,
}

fn sorted(ids: &[String]) -> Vec<String> {
    let mut ids = ids.to_vec();
    ids.sort();
    ids
}

/// PAM prototypes over `ids` (ordered lexicographically so index ties are id ties).
pub fn kmedoids_prototypes(tfidf: &TfidfIndex, ids: &[String], k: usize, exec: Exec) -> Result<PrototypeGroup> {
    if ids.is_empty() {
        return Err(Error::invalid("no ids to cluster"));
    }
    let ids = sorted(ids);
    let rows = tfidf.rows_for(&ids)?;
    let r = kmedoids::pam(&kmedoids::cosine_distances(&rows, exec), k, exec)?;
    Ok(PrototypeGroup {
        medoids: r.medoids.iter().map(|m| ids[*m].clone()).collect(),
        cost: r.cost,
        cost_history: r.cost_history,
        ids,
    })
}

/// MMD-critic prototypes and criticisms over `ids`.
pub fn mmd_criticisms(tfidf: &TfidfIndex, ids: &[String], m_p: usize, m_c: usize, exec: Exec) -> Result<CriticismGroup> {
    let ids = sorted(ids);
    let rows = tfidf.rows_for(&ids)?;
    let r = mmd::mmd_critic(&rows, m_p, m_c, exec)?;
    Ok(CriticismGroup {
        prototypes: r.prototypes.iter().map(|p| ids[*p].clone()).collect(),
        criticisms: r
            .criticisms
            .iter()
            .zip(&r.criticism_witness)
            .map(|(c, w)| Criticism {
                id: ids[*c].clone(),
                witness: *w,
            })
            .collect(),
        gamma: r.gamma,
        objective_history: r.objective_history,
        ids,
    })
}

/// Split ids grouped by the model-predicted label; empty groups are omitted.
fn predicted_groups(dataset: &Dataset, split: &str, predictor: &Predictor) -> Result<BTreeMap<String, Vec<String>>> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, _, label) in tokens::split_labels(dataset, split, Some(predictor))? {
        let label = label.expect("predictions always carry a label");
        groups.entry(dataset.labels()[label].clone()).or_default().push(id);
    }
    Ok(groups)
}

/// K-Medoids prototypes for a split, globally and per predicted label.
/// `k` is clamped to the size of each label group.
pub fn prototypes(dataset: &Dataset, split: &str, predictor: &Predictor, k: usize, exec: Exec) -> Result<GlobalSummary> {
    let tfidf = build_tfidf(dataset, split)?;
    let global = kmedoids_prototypes(&tfidf, &tfidf.ids, k, exec)?;
    let per_label = predicted_groups(dataset, split, predictor)?
        .into_iter()
        .map(|(label, ids)| {
            let k = k.min(ids.len());
            kmedoids_prototypes(&tfidf, &ids, k, exec).map(|g| (label, g))
        })
        .collect::<Result<_>>()?;
    Ok(GlobalSummary {
        kind: GlobalKind::Prototypes,
        split: split.to_owned(),
        label_source: LabelSource::Predicted,
        payload: GlobalPayload::Prototypes { k, global, per_label },
    })
}

/// MMD-critic for a split, globally and per predicted label. Per-label
/// counts are clamped so that `m_p + m_c` fits each group.
pub fn criticisms(
    dataset: &Dataset,
    split: &str,
    predictor: &Predictor,
    m_p: usize,
    m_c: usize,
    exec: Exec,
) -> Result<GlobalSummary> {
    let tfidf = build_tfidf(dataset, split)?;
    let global = mmd_criticisms(&tfidf, &tfidf.ids, m_p, m_c, exec)?;
    let per_label = predicted_groups(dataset, split, predictor)?
        .into_iter()
        .map(|(label, ids)| {
            let p = m_p.min(ids.len());
            let c = m_c.min(ids.len() - p);
            mmd_criticisms(&tfidf, &ids, p, c, exec).map(|g| (label, g))
        })
        .collect::<Result<_>>()?;
    Ok(GlobalSummary {
        kind: GlobalKind::PrototypesCriticisms,
        split: split.to_owned(),
        label_source: LabelSource::Predicted,
        payload: GlobalPayload::PrototypesCriticisms {
            m_p,
            m_c,
            regularizer: "none",
            global,
            per_label,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::train_baseline;
    use crate::ingest::{Instance, Task};

    fn dataset() -> Dataset {
        let rows = [
            ("great fun film", "pos"),
            ("great fun movie", "pos"),
            ("fun great show", "pos"),
            ("awful dull plot", "neg"),
            ("dull awful acting", "neg"),
            ("awful boring dull", "neg"),
        ];
        let instances: Vec<Instance> = rows
            .iter()
            .enumerate()
            .map(|(i, (t, l))| Instance::new(format!("r{i}"), *t).with_label(*l))
            .collect();
        let ids = instances.iter().map(|i| i.id.clone()).collect();
        Dataset::new(Task::Classification, vec![], instances, vec![("test".into(), ids)]).unwrap()
    }

    #[test]
    fn prototypes_split_the_clusters() {
        let d = dataset();
        let p = train_baseline(&d, "test").unwrap();
        let s = prototypes(&d, "test", &p, 2, Exec::Parallel).unwrap();
        let GlobalPayload::Prototypes { global, per_label, .. } = s.payload else { panic!() };
        let pos: Vec<bool> = global.medoids.iter().map(|m| ["r0", "r1", "r2"].contains(&m.as_str())).collect();
        assert_eq!(pos.iter().filter(|b| **b).count(), 1);
        assert_eq!(per_label.len(), 2);
        assert!(per_label.values().all(|g| g.medoids.len() == 2));
    }

    #[test]
    fn criticisms_are_flagged_unregularized() {
        let d = dataset();
        let p = train_baseline(&d, "test").unwrap();
        let s = criticisms(&d, "test", &p, 2, 2, Exec::Sequential).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["kind"], "prototypes-criticisms");
        assert_eq!(v["payload"]["regularizer"], "none");
        assert_eq!(v["payload"]["global"]["criticisms"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            GlobalKind::TokenFrequency,
            GlobalKind::TokenInformation,
            GlobalKind::Prototypes,
            GlobalKind::PrototypesCriticisms,
        ] {
            let name = serde_json::to_value(k).unwrap();
            assert_eq!(GlobalKind::parse(name.as_str().unwrap()), Some(k));
        }
    }
}
