//! Behavioral test suites: minimum functionality (MFT), invariance (INV)
//! and directional expectation (DIR) tests.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bridge::{argmax, Predictor};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Gold, Instance, Task};

use super::perturb::Perturber;
use super::template::{expand_template, Template};

pub const DEFAULT_DIR_MARGIN: f64 = 0.05;
pub const DEFAULT_TEMPLATE_N: usize = 20;
/// Failing cases quoted in [`TestResult::example_failures`].
pub const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestKind {
    Mft,
    Inv,
    Dir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NonDecrease,
    NonIncrease,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseVerdict {
    pub id: String,
    pub original: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    pub original_output: Vec<f64>,
    pub original_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant_output: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant_label: Option<String>,
    /// Change in the target probability (DIR only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureExample {
    pub id: String,
    pub original: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub name: String,
    pub kind: TestKind,
    pub n_cases: usize,
    pub n_failures: usize,
    pub failure_rate: f64,
    pub example_failures: Vec<FailureExample>,
    pub cases: Vec<CaseVerdict>,
    pub metadata: Value,
}

impl TestResult {
    fn from_cases(name: String, kind: TestKind, cases: Vec<CaseVerdict>, metadata: Value) -> Self {
        let n_failures = cases.iter().filter(|c| !c.passed).count();
        let example_failures = cases
            .iter()
            .filter(|c| !c.passed)
            .take(MAX_EXAMPLES)
            .map(|c| FailureExample {
                id: c.id.clone(),
                original: c.original.clone(),
                variant: c.variant.clone(),
            })
            .collect();
        TestResult {
            name,
            kind,
            n_cases: cases.len(),
            n_failures,
            failure_rate: n_failures as f64 / cases.len() as f64,
            example_failures,
            cases,
            metadata,
        }
    }
}

fn require_classification(predictor: &Predictor) -> Result<()> {
    if predictor.task() != Task::Classification {
        return Err(Error::TaskMismatch("behavioral tests need a classifier".into()));
    }
    Ok(())
}

fn nonempty<T>(items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("empty suite"));
    }
    Ok(())
}

type Rows = Vec<Vec<f64>>;

/// Predictions for `originals` followed by `variants`, in one batched call.
fn predict_pairs(predictor: &Predictor, originals: &[String], variants: &[String]) -> Result<(Rows, Rows)> {
    let texts: Vec<String> = originals.iter().chain(variants).cloned().collect();
    let mut outputs = predictor.predict(&texts)?.outputs;
    let second = outputs.split_off(originals.len());
    Ok((outputs, second))
}

/// Pass iff the argmax prediction equals the instance's gold label.
pub fn run_mft(cases: &[Instance], predictor: &Predictor) -> Result<TestResult> {
    require_classification(predictor)?;
    nonempty(cases)?;
    let labels = predictor.labels();
    let mut expected = Vec::with_capacity(cases.len());
    for c in cases {
        let label = c
            .gold
            .as_ref()
            .and_then(Gold::label)
            .ok_or_else(|| Error::invalid(format!("case `{}` has no expected label", c.id)))?;
        if !labels.iter().any(|l| l == label) {
            return Err(Error::UnknownLabel(label.to_owned()));
        }
        expected.push(label.to_owned());
    }
    let texts: Vec<String> = cases.iter().map(|c| c.text.clone()).collect();
    let outputs = predictor.predict(&texts)?.outputs;
    let verdicts = cases
        .iter()
        .zip(expected)
        .zip(outputs)
        .map(|((c, exp), out)| {
            let label = labels[argmax(&out)].clone();
            CaseVerdict {
                id: c.id.clone(),
                original: c.text.clone(),
                variant: None,
                passed: label == exp,
                expected: Some(exp),
                original_output: out,
                original_label: label,
                variant_output: None,
                variant_label: None,
                delta: None,
            }
        })
        .collect();
    Ok(TestResult::from_cases("MFT".into(), TestKind::Mft, verdicts, json!({})))
}

fn variants(instances: &[Instance], perturber: &Perturber, seed: u64) -> Result<Vec<String>> {
    instances.iter().map(|i| perturber.apply(&i.text, seed)).collect()
}

/// Pass iff the argmax prediction survives the perturbation.
pub fn run_inv(instances: &[Instance], perturber: &Perturber, predictor: &Predictor, seed: u64) -> Result<TestResult> {
    require_classification(predictor)?;
    nonempty(instances)?;
    let originals: Vec<String> = instances.iter().map(|i| i.text.clone()).collect();
    let variant_texts = variants(instances, perturber, seed)?;
    let (before, after) = predict_pairs(predictor, &originals, &variant_texts)?;
    let labels = predictor.labels();
    let verdicts = instances
        .iter()
        .zip(variant_texts)
        .zip(before.into_iter().zip(after))
        .map(|((inst, variant), (b, a))| {
            let (lb, la) = (argmax(&b), argmax(&a));
            CaseVerdict {
                id: inst.id.clone(),
                original: inst.text.clone(),
                variant: Some(variant),
                expected: None,
                original_output: b,
                original_label: labels[lb].clone(),
                variant_output: Some(a),
                variant_label: Some(labels[la].clone()),
                delta: None,
                passed: lb == la,
            }
        })
        .collect();
    Ok(TestResult::from_cases(
        "INV".into(),
        TestKind::Inv,
        verdicts,
        json!({"perturber": perturber, "seed": seed}),
    ))
}

/// Pass iff the target probability moves in `direction`, up to `margin`.
pub fn run_dir(
    instances: &[Instance],
    perturber: &Perturber,
    predictor: &Predictor,
    target_label: &str,
    direction: Direction,
    margin: f64,
    seed: u64,
) -> Result<TestResult> {
    require_classification(predictor)?;
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::invalid(format!("margin {margin} must be nonnegative")));
    }
    let labels = predictor.labels();
    let target = labels
        .iter()
        .position(|l| l == target_label)
        .ok_or_else(|| Error::UnknownLabel(target_label.to_owned()))?;
    nonempty(instances)?;
    let originals: Vec<String> = instances.iter().map(|i| i.text.clone()).collect();
    let variant_texts = variants(instances, perturber, seed)?;
    let (before, after) = predict_pairs(predictor, &originals, &variant_texts)?;
    let verdicts = instances
        .iter()
        .zip(variant_texts)
        .zip(before.into_iter().zip(after))
        .map(|((inst, variant), (b, a))| {
            let delta = a[target] - b[target];
            let passed = match direction {
                Direction::NonDecrease => delta >= -margin,
                Direction::NonIncrease => delta <= margin,
            };
            CaseVerdict {
                id: inst.id.clone(),
                original: inst.text.clone(),
                variant: Some(variant),
                expected: None,
                original_label: labels[argmax(&b)].clone(),
                variant_label: Some(labels[argmax(&a)].clone()),
                original_output: b,
                variant_output: Some(a),
                delta: Some(delta),
                passed,
            }
        })
        .collect();
    Ok(TestResult::from_cases(
        "DIR".into(),
        TestKind::Dir,
        verdicts,
        json!({
            "perturber": perturber,
            "seed": seed,
            "target_label": target_label,
            "direction": direction,
            "margin": margin,
        }),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestParams {
    /// Instances generated from a template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Dataset split used when no template is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Cap on the number of split instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

/// One entry of a test-suite spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(rename = "type")]
    pub kind: TestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Template>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturber: Option<Perturber>,
    #[serde(default)]
    pub params: TestParams,
    /// Expected label for MFT cases; overrides the template's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub tests: Vec<TestSpec>,
}

impl SuiteSpec {
    /// Accepts either `{"tests": [...]}` or a bare list of tests.
    pub fn from_value(value: Value) -> Result<Self> {
        let parsed = match value {
            Value::Array(_) => serde_json::from_value(value).map(|tests| SuiteSpec { tests }),
            other => serde_json::from_value(other),
        };
        parsed.map_err(|e| Error::invalid(format!("bad suite spec: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad suite spec: {e}")))?;
        Self::from_value(value)
    }
}

fn source_instances(spec: &TestSpec, dataset: Option<&Dataset>, seed: u64) -> Result<Vec<Instance>> {
    let mut instances = match &spec.template {
        Some(t) => expand_template(t, spec.params.n.unwrap_or(DEFAULT_TEMPLATE_N), seed)?,
        None => {
            let dataset = dataset.ok_or_else(|| Error::invalid("test needs a template or a dataset split"))?;
            let split = match &spec.params.split {
                Some(s) => s.clone(),
                None => dataset
                    .default_split()
                    .ok_or_else(|| Error::invalid("dataset has no splits"))?
                    .to_owned(),
            };
            let mut out: Vec<Instance> = dataset
                .split_instances(&split)
                .map_err(|_| Error::UnknownSplit(split.clone()))?
                .into_iter()
                .cloned()
                .collect();
            if let Some(limit) = spec.params.limit {
                out.truncate(limit);
            }
            out
        }
    };
    if let Some(label) = &spec.expected {
        for inst in &mut instances {
            inst.gold = Some(Gold::Label(label.clone()));
        }
    }
    Ok(instances)
}

/// Run every test of a suite spec. Template-only suites need no dataset.
pub fn run_suite(spec: &SuiteSpec, dataset: Option<&Dataset>, predictor: &Predictor, seed: u64) -> Result<Vec<TestResult>> {
    nonempty(&spec.tests)?;
    spec.tests
        .iter()
        .enumerate()
        .map(|(i, test)| {
            let instances = source_instances(test, dataset, seed)?;
            let perturber = || {
                test.perturber
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("{:?} test needs a perturber", test.kind)))
            };
            let mut result = match test.kind {
                TestKind::Mft => run_mft(&instances, predictor)?,
                TestKind::Inv => run_inv(&instances, perturber()?, predictor, seed)?,
                TestKind::Dir => {
                    let target = test
                        .params
                        .target_label
                        .as_deref()
                        .ok_or_else(|| Error::invalid("DIR test needs params.target_label"))?;
                    run_dir(
                        &instances,
                        perturber()?,
                        predictor,
                        target,
                        test.params.direction.unwrap_or(Direction::NonDecrease),
                        test.params.margin.unwrap_or(DEFAULT_DIR_MARGIN),
                        seed,
                    )?
                }
            };
            result.name = test.name.clone().unwrap_or_else(|| format!("{}-{i}", result.name));
            result.metadata = json!({"seed": seed, "spec": test});
            Ok(result)
        })
        .collect()
}
