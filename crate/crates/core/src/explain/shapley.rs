//! Shapley value computation on coalition value tables.

use crate::error::{Error, Result};
use crate::par::Exec;

use super::sampling::bits_from_mask;
use super::wls::wls_solve;

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` among `d` players:
/// `(d-1) / (C(d,s) s (d-s))`. Infinite for the empty and full coalitions.
pub fn shapley_kernel_weight(d: usize, s: usize) -> f64 {
    if s == 0 || s >= d {
        return f64::INFINITY;
    }
    (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64)
}

/// Exact Shapley values from a full value table indexed by coalition bitmask
/// (bit `i` set means player `i` is present).
///
/// `phi_i = sum over S not containing i of |S|!(d-|S|-1)!/d! (v(S+i) - v(S))`.
pub fn exact_from_table(d: usize, values: &[f64], exec: Exec) -> Result<Vec<f64>> {
    if d == 0 || d > 30 {
        return Err(Error::invalid(format!("cannot enumerate coalitions for {d} players")));
    }
    if values.len() != 1 << d {
        return Err(Error::invalid(format!(
            "value table has {} entries, expected {}",
            values.len(),
            1usize << d
        )));
    }
    // |S|!(d-|S|-1)!/d! = 1 / (d * C(d-1, |S|))
    let coef: Vec<f64> = (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    Ok(exec.map_range(d, |i| {
        let bit = 1usize << i;
        let mut phi = 0.0;
        for s in 0..values.len() {
            if s & bit == 0 {
                phi += coef[s.count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
        phi
    }))
}

/// KernelSHAP regression: weighted least squares of `v(z) - v(empty)` on the
/// coalition masks subject to `sum(phi) = v(full) - v(empty)`, enforced by
/// eliminating the last coefficient. `jitter` regularizes the normal equations.
pub fn kernel_shap_fit(
    masks: &[Vec<bool>],
    values: &[f64],
    weights: &[f64],
    empty_value: f64,
    full_value: f64,
    jitter: f64,
) -> Result<Vec<f64>> {
    let d = masks.first().map(Vec::len).unwrap_or(0);
    if d < 2 {
        return Err(Error::invalid("KernelSHAP needs at least two tokens"));
    }
    let delta = full_value - empty_value;
    let last = d - 1;
    let mut design = Vec::with_capacity(masks.len());
    let mut targets = Vec::with_capacity(masks.len());
    for (mask, v) in masks.iter().zip(values) {
        let z_last = f64::from(u8::from(mask[last]));
        design.push(
            mask[..last]
                .iter()
                .map(|k| f64::from(u8::from(*k)) - z_last)
                .collect::<Vec<f64>>(),
        );
        targets.push(v - empty_value - z_last * delta);
    }
    let sol = wls_solve(&design, &targets, weights, 0.0, false, jitter)?;
    let mut phi = sol.coefficients;
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(phi)
}

/// Shapley kernel weights for a set of proper coalitions.
pub fn kernel_weights(masks: &[Vec<bool>]) -> Vec<f64> {
    masks
        .iter()
        .map(|m| shapley_kernel_weight(m.len(), bits_from_mask(m).count_ones() as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_weight_example() {
        assert_eq!(shapley_kernel_weight(4, 1), 0.25);
        assert!(shapley_kernel_weight(4, 0).is_infinite());
        assert_eq!(binomial(6, 2), 15.0);
    }

    #[test]
    fn additive_table_gives_increments() {
        // v(S) = 0.1 + 0.5 [0 in S] + 0.2 [1 in S]
        let values: Vec<f64> = (0..4)
            .map(|b| 0.1 + 0.5 * (b & 1) as f64 + 0.2 * (b >> 1 & 1) as f64)
            .collect();
        let phi = exact_from_table(2, &values, Exec::Sequential).unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-15 && (phi[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn symmetric_players_share_equally() {
        let d = 4;
        let values: Vec<f64> = (0..1u32 << d).map(|b| (b.count_ones() as f64).powi(2)).collect();
        let phi = exact_from_table(d, &values, Exec::Parallel).unwrap();
        for p in &phi {
            assert!((p - phi[0]).abs() < 1e-12);
        }
        assert!((phi.iter().sum::<f64>() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn table_size_checked() {
        assert!(exact_from_table(3, &[0.0; 7], Exec::Sequential).is_err());
    }
}
