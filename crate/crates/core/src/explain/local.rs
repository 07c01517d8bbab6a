//! Local feature attribution built from a sampler, a weighter and a surrogate.

use serde::{Deserialize, Serialize};

use crate::bridge::{argmax, Predictor};
use crate::error::{Error, Result};
use crate::ingest::{distinct, tokenize, Instance, Task};
use crate::par::Exec;
use crate::rng::{self, StreamRng};

use super::sampling::{Exhaustive, Mask, Sampler, ShapleyKernelSampler, UniformRemoval};
use super::shapley::{exact_from_table, kernel_shap_fit, kernel_weights};
use super::wls::{wls_solve, DEFAULT_JITTER};

/// An instance viewed through its distinct-token presence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedText {
    pub tokens: Vec<String>,
    pub distinct: Vec<String>,
}

impl MaskedText {
    pub fn new(text: &str) -> Self {
        let tokens = tokenize(text);
        let distinct = distinct(&tokens);
        MaskedText { tokens, distinct }
    }

    pub fn dim(&self) -> usize {
        self.distinct.len()
    }

    /// Token sequence with every occurrence of switched-off tokens removed.
    pub fn render(&self, mask: &[bool]) -> String {
        let kept: Vec<&str> = self
            .distinct
            .iter()
            .zip(mask)
            .filter(|(_, k)| **k)
            .map(|(t, _)| t.as_str())
            .collect();
        self.tokens
            .iter()
            .filter(|t| kept.contains(&t.as_str()))
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskSample {
    pub mask: Mask,
    pub rendered_text: String,
    pub weight: f64,
}

/// Scalar model output explained by an attribution.
pub trait ValueFn: Sync {
    fn evaluate(&self, texts: &[String]) -> Result<Vec<f64>>;
}

/// Target value of a [`Predictor`]: probability of one label, or the score.
pub struct PredictorTarget<'a> {
    pub predictor: &'a Predictor,
    pub label: Option<usize>,
}

impl ValueFn for PredictorTarget<'_> {
    fn evaluate(&self, texts: &[String]) -> Result<Vec<f64>> {
        let batch = self.predictor.predict(texts)?;
        Ok(batch
            .outputs
            .iter()
            .map(|r| self.predictor.target_value(r, self.label))
            .collect())
    }
}

/// Sample weighting component.
pub trait Weighter {
    fn name(&self) -> &'static str;
    fn weights(&self, masks: &[Mask]) -> Vec<f64>;
}

/// `exp(-(scale * d_cos(z, 1))^2 / width^2)` where `d_cos` is the cosine
/// distance between the mask and the all-ones vector.
#[derive(Debug, Clone, Copy)]
pub struct CosineKernel {
    pub width: f64,
    pub scale: f64,
}

impl CosineKernel {
    pub fn distance(mask: &[bool]) -> f64 {
        let kept = mask.iter().filter(|k| **k).count();
        if kept == 0 {
            return 1.0;
        }
        1.0 - (kept as f64 / mask.len() as f64).sqrt()
    }

    pub fn weight(&self, mask: &[bool]) -> f64 {
        let d = self.scale * Self::distance(mask);
        (-(d * d) / (self.width * self.width)).exp()
    }
}

impl Weighter for CosineKernel {
    fn name(&self) -> &'static str {
        "cosine-exponential"
    }

    fn weights(&self, masks: &[Mask]) -> Vec<f64> {
        masks.iter().map(|m| self.weight(m)).collect()
    }
}

/// Shapley kernel over coalition sizes (proper coalitions only).
#[derive(Debug, Clone, Copy)]
pub struct ShapleyKernel;

impl Weighter for ShapleyKernel {
    fn name(&self) -> &'static str {
        "shapley-kernel"
    }

    fn weights(&self, masks: &[Mask]) -> Vec<f64> {
        kernel_weights(masks)
    }
}

/// Equal weights, for samples already drawn proportionally to a kernel.
#[derive(Debug, Clone, Copy)]
pub struct Uniform;

impl Weighter for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn weights(&self, masks: &[Mask]) -> Vec<f64> {
        vec![1.0 / masks.len().max(1) as f64; masks.len()]
    }
}

/// Model outputs on the anchor coalitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchors {
    pub full: f64,
    pub empty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub base_value: f64,
    pub weights: Vec<f64>,
}

/// Interpretable model fitted on the weighted samples.
pub trait Surrogate {
    fn name(&self) -> &'static str;
    fn fit(&self, samples: &[MaskSample], values: &[f64], anchors: Anchors) -> Result<SurrogateFit>;
}

/// Ridge regression with unpenalized intercept.
#[derive(Debug, Clone, Copy)]
pub struct Ridge {
    pub alpha: f64,
}

impl Surrogate for Ridge {
    fn name(&self) -> &'static str {
        "ridge"
    }

    fn fit(&self, samples: &[MaskSample], values: &[f64], _anchors: Anchors) -> Result<SurrogateFit> {
        let design: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.mask.iter().map(|k| f64::from(u8::from(*k))).collect())
            .collect();
        let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        let sol = wls_solve(&design, values, &weights, self.alpha, true, DEFAULT_JITTER)?;
        Ok(SurrogateFit {
            base_value: sol.intercept,
            weights: sol.coefficients,
        })
    }
}

/// Linear model constrained to `base + sum(phi) = v(full)` with `base = v(empty)`.
#[derive(Debug, Clone, Copy)]
pub struct EfficientLinear {
    pub jitter: f64,
}

impl Surrogate for EfficientLinear {
    fn name(&self) -> &'static str {
        "efficient-linear"
    }

    fn fit(&self, samples: &[MaskSample], values: &[f64], anchors: Anchors) -> Result<SurrogateFit> {
        let masks: Vec<Mask> = samples.iter().map(|s| s.mask.clone()).collect();
        let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        let phi = kernel_shap_fit(&masks, values, &weights, anchors.empty, anchors.full, self.jitter)?;
        Ok(SurrogateFit {
            base_value: anchors.empty,
            weights: phi,
        })
    }
}

/// A local explainer assembled from generic components.
pub struct LocalPipeline<S, W, F> {
    pub sampler: S,
    pub weighter: W,
    pub surrogate: F,
}

/// Output of one pipeline run before it is labelled with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub fit: SurrogateFit,
    pub anchors: Anchors,
    pub n_evaluated: usize,
}

impl<S: Sampler, W: Weighter, F: Surrogate> LocalPipeline<S, W, F> {
    pub fn run(&self, text: &MaskedText, value_fn: &dyn ValueFn, rng: &mut StreamRng) -> Result<PipelineOutput> {
        let d = text.dim();
        if d == 0 {
            return Err(Error::Degenerate("instance has no tokens to attribute".into()));
        }
        let masks = self.sampler.sample(d, rng)?;
        let weights = self.weighter.weights(&masks);
        let samples: Vec<MaskSample> = Exec::default()
            .map_slice(&masks, |m| text.render(m))
            .into_iter()
            .zip(masks)
            .zip(weights)
            .map(|((rendered_text, mask), weight)| MaskSample {
                mask,
                rendered_text,
                weight,
            })
            .collect();
        let mut texts: Vec<String> = samples.iter().map(|s| s.rendered_text.clone()).collect();
        texts.push(text.render(&vec![true; d]));
        texts.push(String::new());
        let mut values = value_fn.evaluate(&texts)?;
        let empty = values.pop().expect("anchor");
        let full = values.pop().expect("anchor");
        let anchors = Anchors { full, empty };
        let fit = self.surrogate.fit(&samples, &values, anchors)?;
        Ok(PipelineOutput {
            fit,
            anchors,
            n_evaluated: samples.len(),
        })
    }
}

// ---------------------------------------------------------------------------
// Presets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Random,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeParams {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub distance_scale: f64,
    pub ridge_strength: f64,
    pub top_k: usize,
    pub sampling: Sampling,
}

impl Default for LimeParams {
    fn default() -> Self {
        LimeParams {
            n_samples: 5000,
            kernel_width: 25.0,
            distance_scale: 100.0,
            ridge_strength: 1.0,
            top_k: 10,
            sampling: Sampling::Random,
        }
    }
}

impl LimeParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::invalid("n_samples must be >= 1"));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(Error::invalid("kernel_width must be > 0"));
        }
        if !(self.ridge_strength >= 0.0 && self.ridge_strength.is_finite()) {
            return Err(Error::invalid("ridge_strength must be >= 0"));
        }
        if !self.distance_scale.is_finite() {
            return Err(Error::invalid("distance_scale must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapParams {
    pub exact_threshold: usize,
    pub n_samples: usize,
    pub epsilon: f64,
    pub top_k: usize,
}

impl Default for ShapParams {
    fn default() -> Self {
        ShapParams {
            exact_threshold: 12,
            n_samples: 2048,
            epsilon: 1e-10,
            top_k: 10,
        }
    }
}

impl ShapParams {
    pub fn validate(&self) -> Result<()> {
        if self.exact_threshold < 1 {
            return Err(Error::invalid("exact_threshold must be >= 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMethod {
    Lime,
    Kernelshap,
    ExactShapley,
}

impl AttributionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::Lime => "lime",
            AttributionMethod::Kernelshap => "kernelshap",
            AttributionMethod::ExactShapley => "exact-shapley",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lime" => Some(AttributionMethod::Lime),
            "kernelshap" | "kernel-shap" | "kernel_shap" => Some(AttributionMethod::Kernelshap),
            "exact-shapley" | "exact_shapley" | "shapley" => Some(AttributionMethod::ExactShapley),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub method: AttributionMethod,
    pub instance_id: String,
    pub text: String,
    /// `None` for regression targets.
    pub target_label: Option<String>,
    pub base_value: f64,
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
    /// Largest `top_k` weights by magnitude, in rank order.
    pub top_tokens: Vec<(String, f64)>,
    /// Model output on the full text.
    pub model_output: f64,
    pub n_evaluated: usize,
    pub exact: bool,
    pub components: [String; 3],
    pub params: serde_json::Value,
    pub seed: u64,
}

fn top_k(tokens: &[String], weights: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|i| (tokens[i].clone(), weights[i]))
        .collect()
}

/// Resolve the explained label: the named one, or the model's argmax on the full text.
pub fn resolve_target(predictor: &Predictor, text: &str, target_label: Option<&str>) -> Result<Option<usize>> {
    match predictor.task() {
        Task::Regression => Ok(None),
        Task::Classification => match target_label {
            Some(l) => predictor
                .labels()
                .iter()
                .position(|x| x == l)
                .map(Some)
                .ok_or_else(|| Error::UnknownLabel(l.to_owned())),
            None => Ok(Some(argmax(&predictor.predict_one(text)?))),
        },
    }
}

struct Prepared<'a> {
    text: MaskedText,
    target: PredictorTarget<'a>,
    label_name: Option<String>,
}

fn prepare<'a>(instance: &Instance, predictor: &'a Predictor, target_label: Option<&str>) -> Result<Prepared<'a>> {
    let text = MaskedText::new(&instance.text);
    if text.dim() == 0 {
        return Err(Error::Degenerate(format!("instance `{}` has no tokens", instance.id)));
    }
    let label = resolve_target(predictor, &instance.text, target_label)?;
    Ok(Prepared {
        label_name: label.map(|l| predictor.labels()[l].clone()),
        target: PredictorTarget { predictor, label },
        text,
    })
}

fn stream_for(seed: u64, instance: &Instance, method: AttributionMethod) -> StreamRng {
    rng::stream(seed, &[&instance.id, method.as_str()])
}

/// LIME: ridge regression of model outputs on masks, weighted by an
/// exponential kernel on cosine distance to the full instance.
pub fn lime(
    instance: &Instance,
    predictor: &Predictor,
    target_label: Option<&str>,
    params: &LimeParams,
    seed: u64,
) -> Result<AttributionResult> {
    params.validate()?;
    let prep = prepare(instance, predictor, target_label)?;
    let weighter = CosineKernel {
        width: params.kernel_width,
        scale: params.distance_scale,
    };
    let surrogate = Ridge {
        alpha: params.ridge_strength,
    };
    let mut rng = stream_for(seed, instance, AttributionMethod::Lime);
    let (out, sampler_name) = match params.sampling {
        Sampling::Random => {
            let sampler = UniformRemoval {
                n_samples: params.n_samples,
            };
            let p = LocalPipeline { sampler, weighter, surrogate };
            (p.run(&prep.text, &prep.target, &mut rng)?, sampler.name())
        }
        Sampling::Exhaustive => {
            let sampler = Exhaustive { proper_only: false };
            let p = LocalPipeline { sampler, weighter, surrogate };
            (p.run(&prep.text, &prep.target, &mut rng)?, sampler.name())
        }
    };
    Ok(AttributionResult {
        method: AttributionMethod::Lime,
        instance_id: instance.id.clone(),
        text: instance.text.clone(),
        target_label: prep.label_name,
        base_value: out.fit.base_value,
        top_tokens: top_k(&prep.text.distinct, &out.fit.weights, params.top_k),
        tokens: prep.text.distinct,
        weights: out.fit.weights,
        model_output: out.anchors.full,
        n_evaluated: out.n_evaluated,
        exact: params.sampling == Sampling::Exhaustive,
        components: [sampler_name.into(), weighter.name().into(), surrogate.name().into()],
        params: serde_json::to_value(params).expect("params serialize"),
        seed,
    })
}

/// Exact Shapley values by enumerating all `2^d` coalitions.
pub fn exact_shapley(
    instance: &Instance,
    predictor: &Predictor,
    target_label: Option<&str>,
    params: &ShapParams,
) -> Result<AttributionResult> {
    params.validate()?;
    let prep = prepare(instance, predictor, target_label)?;
    let d = prep.text.dim();
    if d > params.exact_threshold {
        return Err(Error::invalid(format!(
            "{d} distinct tokens exceed the exact threshold {}",
            params.exact_threshold
        )));
    }
    let exec = Exec::default();
    let texts: Vec<String> = exec.map_range(1 << d, |bits| {
        prep.text.render(&super::sampling::mask_from_bits(d, bits as u64))
    });
    let values = prep.target.evaluate(&texts)?;
    let phi = exact_from_table(d, &values, exec)?;
    Ok(AttributionResult {
        method: AttributionMethod::ExactShapley,
        instance_id: instance.id.clone(),
        text: instance.text.clone(),
        target_label: prep.label_name,
        base_value: values[0],
        top_tokens: top_k(&prep.text.distinct, &phi, params.top_k),
        tokens: prep.text.distinct,
        weights: phi,
        model_output: values[(1 << d) - 1],
        n_evaluated: 1 << d,
        exact: true,
        components: ["exhaustive".into(), "shapley-permutation".into(), "exact".into()],
        params: serde_json::to_value(params).expect("params serialize"),
        seed: 0,
    })
}

/// KernelSHAP: exact enumeration of proper coalitions up to the threshold,
/// kernel-proportional sampling above it.
pub fn kernel_shap(
    instance: &Instance,
    predictor: &Predictor,
    target_label: Option<&str>,
    params: &ShapParams,
    seed: u64,
) -> Result<AttributionResult> {
    params.validate()?;
    let prep = prepare(instance, predictor, target_label)?;
    let d = prep.text.dim();
    if d < 2 {
        return Err(Error::Degenerate(format!(
            "KernelSHAP needs at least two distinct tokens, instance `{}` has {d}",
            instance.id
        )));
    }
    let surrogate = EfficientLinear {
        jitter: params.epsilon,
    };
    let mut rng = stream_for(seed, instance, AttributionMethod::Kernelshap);
    let exact = d <= params.exact_threshold;
    let (out, components) = if exact {
        let p = LocalPipeline {
            sampler: Exhaustive { proper_only: true },
            weighter: ShapleyKernel,
            surrogate,
        };
        (p.run(&prep.text, &prep.target, &mut rng)?, ["exhaustive", "shapley-kernel", "efficient-linear"])
    } else {
        if params.n_samples < d + 2 {
            return Err(Error::invalid(format!("n_samples must be >= d + 2 = {}", d + 2)));
        }
        let p = LocalPipeline {
            sampler: ShapleyKernelSampler {
                n_samples: params.n_samples,
            },
            weighter: Uniform,
            surrogate,
        };
        (p.run(&prep.text, &prep.target, &mut rng)?, ["shapley-kernel", "uniform", "efficient-linear"])
    };
    Ok(AttributionResult {
        method: AttributionMethod::Kernelshap,
        instance_id: instance.id.clone(),
        text: instance.text.clone(),
        target_label: prep.label_name,
        base_value: out.fit.base_value,
        top_tokens: top_k(&prep.text.distinct, &out.fit.weights, params.top_k),
        tokens: prep.text.distinct,
        weights: out.fit.weights,
        model_output: out.anchors.full,
        n_evaluated: out.n_evaluated,
        exact,
        components: components.map(String::from),
        params: serde_json::to_value(params).expect("params serialize"),
        seed,
    })
}

/// Dispatch on `method` with default parameters unless `params` is given.
pub fn explain_instance(
    method: AttributionMethod,
    instance: &Instance,
    predictor: &Predictor,
    target_label: Option<&str>,
    params: Option<&serde_json::Value>,
    seed: u64,
) -> Result<AttributionResult> {
    let parse_err = |e: serde_json::Error| Error::invalid(format!("bad params: {e}"));
    match method {
        AttributionMethod::Lime => {
            let p: LimeParams = match params {
                Some(v) => serde_json::from_value(v.clone()).map_err(parse_err)?,
                None => LimeParams::default(),
            };
            lime(instance, predictor, target_label, &p, seed)
        }
        AttributionMethod::Kernelshap | AttributionMethod::ExactShapley => {
            let p: ShapParams = match params {
                Some(v) => serde_json::from_value(v.clone()).map_err(parse_err)?,
                None => ShapParams::default(),
            };
            if method == AttributionMethod::Kernelshap {
                kernel_shap(instance, predictor, target_label, &p, seed)
            } else {
                exact_shapley(instance, predictor, target_label, &p)
            }
        }
    }
}
