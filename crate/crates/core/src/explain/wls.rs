//! Weighted least squares shared by the local surrogates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Diagonal jitter added to the normal equations.
pub const DEFAULT_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    /// Zero when fitted without intercept.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Minimize `sum_i w_i (y_i - b0 - x_i . b)^2 + ridge * |b|^2` through the
/// normal equations. The intercept `b0` is only fitted when `fit_intercept`
/// is set and is never penalized. `jitter` is added to every diagonal entry.
pub fn wls_solve(
    design: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    ridge: f64,
    fit_intercept: bool,
    jitter: f64,
) -> Result<WlsSolution> {
    let n = design.len();
    if n == 0 || targets.len() != n || weights.len() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: {n} rows, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    let p = design[0].len();
    if design.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid("all sample weights are zero"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge strength must be finite and non-negative"));
    }
    let offset = usize::from(fit_intercept);
    let dim = p + offset;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut row = vec![0.0; dim];
    for ((x, &y), &w) in design.iter().zip(targets).zip(weights) {
        if w == 0.0 {
            continue;
        }
        if fit_intercept {
            row[0] = 1.0;
        }
        row[offset..].copy_from_slice(x);
        for a in 0..dim {
            let wa = w * row[a];
            if wa == 0.0 {
                continue;
            }
            rhs[a] += wa * y;
            for b in a..dim {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += jitter;
        if a >= offset {
            gram[(a, a)] += ridge;
        }
    }
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular normal equations".into()))?,
    };
    Ok(WlsSolution {
        intercept: if fit_intercept { beta[0] } else { 0.0 },
        coefficients: beta.iter().skip(offset).copied().collect(),
    })
}
