//! Perturbation samplers over the interpretable representation: binary
//! presence vectors over an instance's distinct tokens.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub type Mask = Vec<bool>;

/// Draws the coalitions a local explainer evaluates.
pub trait Sampler {
    fn name(&self) -> &'static str;
    fn sample(&self, d: usize, rng: &mut StreamRng) -> Result<Vec<Mask>>;
}

/// Mask with the tokens at `removed` switched off.
fn mask_without(d: usize, removed: impl IntoIterator<Item = usize>) -> Mask {
    let mut mask = vec![true; d];
    for i in removed {
        mask[i] = false;
    }
    mask
}

/// First mask is all ones; every other removes `s ~ Uniform{1..d}` tokens
/// chosen uniformly without replacement.
pub fn sample_masks_with(d: usize, n: usize, rng: &mut StreamRng) -> Result<Vec<Mask>> {
    if d == 0 {
        return Err(Error::invalid("cannot sample masks over zero tokens"));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut masks = Vec::with_capacity(n);
    masks.push(vec![true; d]);
    for _ in 1..n {
        let s = rng.random_range(1..=d);
        masks.push(mask_without(d, index::sample(rng, d, s)));
    }
    Ok(masks)
}

pub fn sample_masks(d: usize, n: usize, seed: u64) -> Result<Vec<Mask>> {
    sample_masks_with(d, n, &mut rng::stream(seed, &["sample_masks"]))
}

/// Decode bit `i` of `bits` as token `i` kept.
pub fn mask_from_bits(d: usize, bits: u64) -> Mask {
    (0..d).map(|i| bits >> i & 1 == 1).collect()
}

pub fn bits_from_mask(mask: &[bool]) -> u64 {
    mask.iter()
        .enumerate()
        .filter(|(_, k)| **k)
        .fold(0, |acc, (i, _)| acc | 1 << i)
}

/// Every mask over `d` tokens, optionally without the empty and full masks.
pub fn all_masks(d: usize, proper_only: bool) -> Result<Vec<Mask>> {
    if d == 0 || d > 24 {
        return Err(Error::invalid(format!("cannot enumerate masks for {d} tokens")));
    }
    let full = (1u64 << d) - 1;
    Ok((0..=full)
        .filter(|b| !proper_only || (*b != 0 && *b != full))
        .map(|b| mask_from_bits(d, b))
        .collect())
}

/// Random removal sampler used by LIME.
#[derive(Debug, Clone, Copy)]
pub struct UniformRemoval {
    pub n_samples: usize,
}

impl Sampler for UniformRemoval {
    fn name(&self) -> &'static str {
        "uniform-removal"
    }

    fn sample(&self, d: usize, rng: &mut StreamRng) -> Result<Vec<Mask>> {
        sample_masks_with(d, self.n_samples, rng)
    }
}

/// Full enumeration of the mask lattice.
#[derive(Debug, Clone, Copy)]
pub struct Exhaustive {
    /// Drop the empty and full coalitions (KernelSHAP handles them as constraints).
    pub proper_only: bool,
}

impl Sampler for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn sample(&self, d: usize, _rng: &mut StreamRng) -> Result<Vec<Mask>> {
        all_masks(d, self.proper_only)
    }
}

/// Proper coalitions drawn with size probability proportional to the
/// Shapley kernel mass `(d-1) / (s (d-s))`, members uniform given the size.
#[derive(Debug, Clone, Copy)]
pub struct ShapleyKernelSampler {
    pub n_samples: usize,
}

impl Sampler for ShapleyKernelSampler {
    fn name(&self) -> &'static str {
        "shapley-kernel"
    }

    fn sample(&self, d: usize, rng: &mut StreamRng) -> Result<Vec<Mask>> {
        if d < 2 {
            return Err(Error::invalid("shapley kernel sampling needs at least two tokens"));
        }
        let mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
        let total: f64 = mass.iter().sum();
        let mut masks = Vec::with_capacity(self.n_samples);
        for _ in 0..self.n_samples {
            let mut u = rng.random::<f64>() * total;
            let mut size = d - 1;
            for (i, m) in mass.iter().enumerate() {
                if u < *m {
                    size = i + 1;
                    break;
                }
                u -= m;
            }
            let mut mask = vec![false; d];
            for i in index::sample(rng, d, size) {
                mask[i] = true;
            }
            masks.push(mask);
        }
        Ok(masks)
    }
}
