//! A loaded dataset plus model, turning analysis requests into digestibles.
//! Shared by the CLI and the HTTP service.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bridge::{spawn_external, train_baseline, Predictor, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};
use crate::examine::{confusion, drilldown, examine};
use crate::explain::{
    criticisms, explain_instance, prototypes, token_frequency, token_information, AttributionMethod, GlobalKind,
};
use crate::explore::describe;
use crate::expose::{fairness, run_inv, run_suite, security_fuzz, Perturber, SuiteSpec};
use crate::ingest::{distinct, load_dataset, tokenize, Dataset, Instance, Manifest, Task};
use crate::par::Exec;
use crate::report::{Digestible, DigestibleKind, Provenance, Report, ReportMeta};
use crate::rng::sha256_hex;

pub const DEFAULT_TOP_TOKENS: usize = 10;
pub const DEFAULT_PROTOTYPES: usize = 3;
pub const DEFAULT_CRITICISMS: usize = 2;
/// Split the built-in baseline is trained on when present.
pub const BASELINE_TRAIN_SPLIT: &str = "train";

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Baseline,
    External(Vec<String>),
}

impl ModelSource {
    /// Parse a shell-style command line; `None` or blank selects the baseline.
    pub fn from_command(command: Option<&str>) -> Result<Self> {
        match command.map(str::trim) {
            None | Some("") => Ok(ModelSource::Baseline),
            Some(cmd) => shlex::split(cmd)
                .filter(|argv| !argv.is_empty())
                .map(ModelSource::External)
                .ok_or_else(|| Error::invalid(format!("cannot parse model command `{cmd}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub method: String,
    #[serde(default)]
    pub instance_id: Option<String>,
    /// Raw text for what-if explanations; used when no instance id is given.
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub target_label: Option<String>,
    #[serde(default)]
    pub params: Option<Value>,
    #[serde(default)]
    pub seed: u64,
}

/// Knobs of the full `report` run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    /// Instances of the default split explained locally (those with at
    /// least two distinct tokens, in split order).
    pub n_explain: usize,
    pub methods: Vec<AttributionMethod>,
    pub typo_rate: f64,
    pub created_at: Option<String>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            n_explain: 3,
            methods: vec![AttributionMethod::Kernelshap, AttributionMethod::Lime],
            typo_rate: crate::expose::perturb::DEFAULT_TYPO_RATE,
            created_at: None,
        }
    }
}

pub struct Session {
    dataset: Dataset,
    predictor: Predictor,
    manifest_hash: Option<String>,
    dataset_hash: String,
    exec: Exec,
}

impl Session {
    pub fn new(dataset: Dataset, predictor: Predictor, manifest_hash: Option<String>) -> Self {
        Session {
            dataset_hash: dataset.content_hash(),
            dataset,
            predictor,
            manifest_hash,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Load the manifest's data and attach the model: an external process,
    /// or the baseline trained on the `train` split (else the default split).
    pub fn open(manifest: &Manifest, model: &ModelSource, timeout: Duration) -> Result<Self> {
        let dataset = load_dataset(manifest)?;
        let predictor = match model {
            ModelSource::External(argv) => {
                let labels = (dataset.task() == Task::Classification).then(|| dataset.labels());
                spawn_external(argv, Some(dataset.task()), labels, timeout)?
            }
            ModelSource::Baseline => {
                if dataset.task() != Task::Classification {
                    return Err(Error::TaskMismatch(
                        "the built-in baseline is a classifier; pass a model command for regression".into(),
                    ));
                }
                let split = if dataset.split(BASELINE_TRAIN_SPLIT).is_ok() {
                    BASELINE_TRAIN_SPLIT.to_owned()
                } else {
                    dataset.default_split().expect("datasets have a split").to_owned()
                };
                train_baseline(&dataset, &split)?
            }
        };
        Ok(Session::new(dataset, predictor, Some(manifest.content_hash())))
    }

    pub fn open_path(manifest: impl AsRef<Path>, model_command: Option<&str>) -> Result<Self> {
        let manifest = Manifest::from_path(manifest)?;
        Self::open(&manifest, &ModelSource::from_command(model_command)?, DEFAULT_TIMEOUT)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn dataset_hash(&self) -> &str {
        &self.dataset_hash
    }

    pub fn manifest_hash(&self) -> Option<&str> {
        self.manifest_hash.as_deref()
    }

    pub fn split_or_default(&self, split: Option<&str>) -> Result<String> {
        let name = match split {
            Some(s) => s,
            None => self
                .dataset
                .default_split()
                .ok_or_else(|| Error::invalid("dataset has no splits"))?,
        };
        self.dataset.split(name).map_err(|_| Error::UnknownSplit(name.to_owned()))?;
        Ok(name.to_owned())
    }

    fn digest<T: Serialize>(
        &self,
        kind: DigestibleKind,
        payload: &T,
        operation: &str,
        seed: u64,
        params: Value,
    ) -> Result<Digestible> {
        let provenance = Provenance::new(operation, seed, params)
            .with_model(self.predictor.model_id())
            .with_dataset(&self.dataset_hash);
        Ok(Digestible::new(kind, payload, provenance)?)
    }

    pub fn stats(&self, split: Option<&str>) -> Result<Digestible> {
        let split = self.split_or_default(split)?;
        let stats = describe(&self.dataset, &split, DEFAULT_TOP_TOKENS)?;
        self.digest(
            DigestibleKind::SplitStats,
            &stats,
            "explore.describe",
            0,
            json!({"split": split, "k_top": DEFAULT_TOP_TOKENS}),
        )
    }

    pub fn metrics(&self, split: Option<&str>) -> Result<Digestible> {
        let split = self.split_or_default(split)?;
        let table = examine(&self.dataset, &split, &self.predictor)?;
        self.digest(DigestibleKind::Metrics, &table, "examine.metrics", 0, json!({"split": split}))
    }

    pub fn confusion(&self, split: Option<&str>) -> Result<Digestible> {
        let split = self.split_or_default(split)?;
        let cm = confusion(&self.dataset, &split, &self.predictor)?;
        self.digest(DigestibleKind::Confusion, &cm, "examine.confusion", 0, json!({"split": split}))
    }

    /// Ids in the (gold, predicted) confusion cell.
    pub fn drilldown(&self, split: Option<&str>, gold: &str, pred: &str) -> Result<Vec<String>> {
        let split = self.split_or_default(split)?;
        drilldown(&self.dataset, &split, &self.predictor, gold, pred)
    }

    pub fn explain(&self, req: &ExplainRequest) -> Result<Digestible> {
        let method =
            AttributionMethod::parse(&req.method).ok_or_else(|| Error::invalid(format!("unknown method `{}`", req.method)))?;
        let instance = match (&req.instance_id, &req.text) {
            (Some(id), _) => self
                .dataset
                .instance(id)
                .cloned()
                .ok_or_else(|| Error::UnknownInstance(id.clone()))?,
            (None, Some(text)) => Instance::new(format!("text-{}", &sha256_hex(text.as_bytes())[..16]), text.clone()),
            (None, None) => return Err(Error::invalid("explain needs an instance_id or a text")),
        };
        let result = explain_instance(
            method,
            &instance,
            &self.predictor,
            req.target_label.as_deref(),
            req.params.as_ref(),
            req.seed,
        )?;
        let params = json!({
            "method": method.as_str(),
            "instance_id": instance.id,
            "target_label": req.target_label,
            "params": result.params,
        });
        self.digest(DigestibleKind::Attribution, &result, "explain.local", req.seed, params)
    }

    /// Global summary of a split. `k` is the token count, the number of
    /// prototypes, or the number of criticisms depending on `kind`.
    pub fn global(&self, kind: GlobalKind, split: Option<&str>, k: Option<usize>, seed: u64) -> Result<Digestible> {
        let split = self.split_or_default(split)?;
        let (summary, params) = match kind {
            GlobalKind::TokenFrequency => {
                let k = k.unwrap_or(DEFAULT_TOP_TOKENS);
                (token_frequency(&self.dataset, &split, Some(&self.predictor), k)?, json!({"k": k}))
            }
            GlobalKind::TokenInformation => {
                let k = k.unwrap_or(DEFAULT_TOP_TOKENS);
                (token_information(&self.dataset, &split, &self.predictor, Some(k))?, json!({"k": k}))
            }
            GlobalKind::Prototypes => {
                let n = self.dataset.split(&split)?.len();
                let k = k.unwrap_or(DEFAULT_PROTOTYPES).min(n);
                (prototypes(&self.dataset, &split, &self.predictor, k, self.exec)?, json!({"k": k}))
            }
            GlobalKind::PrototypesCriticisms => {
                let n = self.dataset.split(&split)?.len();
                let m_p = DEFAULT_PROTOTYPES.min(n);
                let m_c = k.unwrap_or(DEFAULT_CRITICISMS).min(n - m_p);
                let s = criticisms(&self.dataset, &split, &self.predictor, m_p, m_c, self.exec)?;
                (s, json!({"m_p": m_p, "m_c": m_c}))
            }
        };
        let mut params = params;
        params["split"] = json!(split);
        params["kind"] = serde_json::to_value(kind).expect("kind serializes");
        self.digest(DigestibleKind::GlobalSummary, &summary, "explain.global", seed, params)
    }

    pub fn run_suite(&self, spec: &SuiteSpec, seed: u64) -> Result<Vec<Digestible>> {
        run_suite(spec, Some(&self.dataset), &self.predictor, seed)?
            .into_iter()
            .map(|result| {
                let params = result.metadata["spec"].clone();
                self.digest(DigestibleKind::TestResult, &result, "expose.suite", seed, params)
            })
            .collect()
    }

    pub fn fairness(&self, split: Option<&str>, attribute: &str, positive_label: Option<&str>) -> Result<Digestible> {
        let split = self.split_or_default(split)?;
        let report = match (self.dataset.task(), positive_label) {
            (Task::Classification, Some(_)) => crate::expose::FairnessReport::Classification(
                crate::expose::fairness_classification(&self.dataset, &split, &self.predictor, attribute, positive_label, None)?,
            ),
            _ => fairness(&self.dataset, &split, &self.predictor, attribute)?,
        };
        self.digest(
            DigestibleKind::FairnessReport,
            &report,
            "expose.fairness",
            0,
            json!({"split": split, "attribute": attribute, "positive_label": positive_label}),
        )
    }

    pub fn fuzz(&self) -> Result<Digestible> {
        let result = security_fuzz(&self.predictor);
        self.digest(
            DigestibleKind::FuzzResult,
            &result,
            "expose.fuzz",
            0,
            json!({"corpus_version": result.corpus_version}),
        )
    }

    /// Run all four analyses with default settings.
    pub fn report(&self, seed: u64, options: &ReportOptions) -> Result<Report> {
        let mut out = Vec::new();
        let names: Vec<String> = self.dataset.split_names().map(str::to_owned).collect();
        for split in &names {
            out.push(self.stats(Some(split))?);
        }
        let split = self.split_or_default(None)?;
        let classification = self.dataset.task() == Task::Classification;
        out.push(self.metrics(Some(&split))?);
        if classification {
            out.push(self.confusion(Some(&split))?);
        }

        let instances = self.dataset.split_instances(&split)?;
        let explained = instances
            .iter()
            .filter(|i| distinct(&tokenize(&i.text)).len() >= 2)
            .take(options.n_explain);
        for inst in explained {
            for method in &options.methods {
                out.push(self.explain(&ExplainRequest {
                    method: method.as_str().to_owned(),
                    instance_id: Some(inst.id.clone()),
                    text: None,
                    target_label: None,
                    params: None,
                    seed,
                })?);
            }
        }
        if classification {
            for kind in [
                GlobalKind::TokenFrequency,
                GlobalKind::TokenInformation,
                GlobalKind::Prototypes,
                GlobalKind::PrototypesCriticisms,
            ] {
                out.push(self.global(kind, Some(&split), None, seed)?);
            }
            let owned: Vec<Instance> = instances.iter().filter(|i| !i.text.is_empty()).map(|i| (*i).clone()).collect();
            let perturber = Perturber::typo(options.typo_rate);
            let result = run_inv(&owned, &perturber, &self.predictor, seed)?;
            out.push(self.digest(
                DigestibleKind::TestResult,
                &result,
                "expose.inv",
                seed,
                json!({"split": split, "perturber": perturber}),
            )?);
        }
        out.push(self.fuzz()?);

        let attributes: BTreeSet<&String> = instances.iter().flat_map(|i| i.attributes.keys()).collect();
        for attribute in attributes {
            let groups: BTreeSet<&String> = instances.iter().filter_map(|i| i.attributes.get(attribute)).collect();
            if groups.len() >= 2 {
                out.push(self.fairness(Some(&split), attribute, None)?);
            }
        }

        let mut meta = ReportMeta::new(
            seed,
            self.manifest_hash.clone(),
            self.dataset_hash.clone(),
            self.predictor.model_id().to_owned(),
        );
        if let Some(ts) = &options.created_at {
            meta.created_at = ts.clone();
        }
        Ok(Report::new(meta, out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> Session {
        let rows = [
            ("t0", "a good film", "pos", "x"),
            ("t1", "a bad film", "neg", "y"),
            ("t2", "good fun", "pos", "y"),
            ("t3", "bad plot", "neg", "x"),
        ];
        let instances: Vec<Instance> = rows
            .iter()
            .map(|(id, t, l, g)| Instance::new(*id, *t).with_label(*l).with_attribute("group", *g))
            .collect();
        let ids = instances.iter().map(|i| i.id.clone()).collect();
        let d = Dataset::new(Task::Classification, vec![], instances, vec![("test".into(), ids)]).unwrap();
        let p = train_baseline(&d, "test").unwrap();
        Session::new(d, p, None)
    }

    #[test]
    fn model_commands() {
        assert_eq!(ModelSource::from_command(None).unwrap(), ModelSource::Baseline);
        assert_eq!(ModelSource::from_command(Some("  ")).unwrap(), ModelSource::Baseline);
        assert_eq!(
            ModelSource::from_command(Some("python3 'my model.py' --x")).unwrap(),
            ModelSource::External(vec!["python3".into(), "my model.py".into(), "--x".into()])
        );
        assert!(ModelSource::from_command(Some("unterminated 'quote")).is_err());
    }

    #[test]
    fn report_is_reproducible_and_verifies() {
        let s = session();
        let a = s.report(5, &ReportOptions::default()).unwrap();
        let b = session().report(5, &ReportOptions::default()).unwrap();
        assert_eq!(a.to_canonical_bytes().unwrap(), b.to_canonical_bytes().unwrap());
        let kinds: BTreeSet<&str> = a.digestibles.iter().map(|d| d.kind.as_str()).collect();
        for k in DigestibleKind::ALL {
            assert!(kinds.contains(k.as_str()), "missing {}", k.as_str());
        }
        let v = crate::report::verify_report(&a.to_canonical_bytes().unwrap());
        assert!(v.valid, "{:?}", v.schema_violations);
    }

    #[test]
    fn explain_by_text_and_errors() {
        let s = session();
        let req = ExplainRequest {
            method: "kernelshap".into(),
            instance_id: None,
            text: Some("good film".into()),
            target_label: Some("pos".into()),
            params: None,
            seed: 1,
        };
        let d = s.explain(&req).unwrap();
        assert_eq!(d.payload["tokens"], json!(["good", "film"]));
        let bad = ExplainRequest {
            method: "anchors".into(),
            ..req.clone()
        };
        assert!(matches!(s.explain(&bad), Err(Error::InvalidParams(_))));
        let missing = ExplainRequest {
            instance_id: Some("nope".into()),
            ..req
        };
        assert!(matches!(s.explain(&missing), Err(Error::UnknownInstance(_))));
        assert!(matches!(s.stats(Some("dev")), Err(Error::UnknownSplit(_))));
    }
}
