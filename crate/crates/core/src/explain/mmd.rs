//! MMD-critic: greedy prototypes under an RBF kernel and witness-function
//! criticisms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explore::median_sorted;
use crate::ingest::SparseRow;
use crate::par::Exec;

/// Squared Euclidean distance between two sparse rows.
pub fn squared_distance(a: &SparseRow, b: &SparseRow) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    (na * na + nb * nb - 2.0 * a.dot(b)).max(0.0)
}

/// `1 / (2 med^2)` for the median pairwise Euclidean distance, or 1 when
/// that median is zero.
pub fn median_heuristic_gamma(rows: &[SparseRow], exec: Exec) -> f64 {
    let n = rows.len();
    let mut dists: Vec<f64> = exec
        .map_range(n, |i| {
            ((i + 1)..n)
                .map(|j| squared_distance(&rows[i], &rows[j]).sqrt())
                .collect::<Vec<f64>>()
        })
        .into_iter()
        .flatten()
        .collect();
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let med = median_sorted(&dists);
    if med > 0.0 {
        1.0 / (2.0 * med * med)
    } else {
        1.0
    }
}

/// Dense RBF kernel matrix `exp(-gamma ||x - y||^2)`.
pub fn rbf_kernel(rows: &[SparseRow], gamma: f64, exec: Exec) -> Vec<Vec<f64>> {
    let n = rows.len();
    exec.map_range(n, |i| {
        (0..n)
            .map(|j| if i == j { 1.0 } else { (-gamma * squared_distance(&rows[i], &rows[j])).exp() })
            .collect()
    })
}

/// `J(S) = 2/(n|S|) sum_{i, j in S} k(x_i, x_j) - 1/|S|^2 sum_{j, j' in S} k(x_j, x_j')`.
pub fn objective(kernel: &[Vec<f64>], selected: &[usize]) -> f64 {
    let n = kernel.len() as f64;
    let s = selected.len() as f64;
    if selected.is_empty() {
        return 0.0;
    }
    let data: f64 = selected.iter().map(|&j| kernel.iter().map(|row| row[j]).sum::<f64>()).sum();
    let within: f64 = selected
        .iter()
        .map(|&j| selected.iter().map(|&k| kernel[j][k]).sum::<f64>())
        .sum();
    2.0 * data / (n * s) - within / (s * s)
}

/// Witness function `w(x) = mean_i k(x_i, x) - mean_{j in S} k(x_j, x)` at every point.
pub fn witness(kernel: &[Vec<f64>], prototypes: &[usize]) -> Vec<f64> {
    let n = kernel.len() as f64;
    let m = prototypes.len() as f64;
    kernel
        .iter()
        .map(|row| {
            let data = row.iter().sum::<f64>() / n;
            let proto = prototypes.iter().map(|&j| row[j]).sum::<f64>() / m;
            data - proto
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmdResult {
    pub gamma: f64,
    pub prototypes: Vec<usize>,
    /// `J` after each greedy prototype step.
    pub objective_history: Vec<f64>,
    pub criticisms: Vec<usize>,
    /// Witness value of each criticism, in the same order.
    pub criticism_witness: Vec<f64>,
}

/// Greedy MMD-critic selection over `rows`. Ties resolve to the lowest index.
pub fn mmd_critic(rows: &[SparseRow], m_p: usize, m_c: usize, exec: Exec) -> Result<MmdResult> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::invalid("no points to summarize"));
    }
    if m_p == 0 {
        return Err(Error::invalid("need at least one prototype"));
    }
    if m_p + m_c > n {
        return Err(Error::invalid(format!(
            "{m_p} prototypes + {m_c} criticisms exceed {n} points"
        )));
    }
    let gamma = median_heuristic_gamma(rows, exec);
    let kernel = rbf_kernel(rows, gamma, exec);
    let colsum: Vec<f64> = exec.map_range(n, |j| kernel.iter().map(|row| row[j]).sum());
    let nf = n as f64;

    let mut selected: Vec<usize> = Vec::with_capacity(m_p);
    let mut in_set = vec![false; n];
    // cross[c] = sum_{j in S} k(x_c, x_j)
    let mut cross = vec![0.0; n];
    let (mut data_sum, mut within_sum) = (0.0, 0.0);
    let mut history = Vec::with_capacity(m_p);
    for _ in 0..m_p {
        let s = (selected.len() + 1) as f64;
        let scores = exec.map_range(n, |c| {
            if in_set[c] {
                return f64::NEG_INFINITY;
            }
            let data = data_sum + colsum[c];
            let within = within_sum + 2.0 * cross[c] + kernel[c][c];
            2.0 * data / (nf * s) - within / (s * s)
        });
        let mut best = usize::MAX;
        for c in 0..n {
            if !in_set[c] && (best == usize::MAX || scores[c] > scores[best]) {
                best = c;
            }
        }
        data_sum += colsum[best];
        within_sum += 2.0 * cross[best] + kernel[best][best];
        for (c, x) in cross.iter_mut().enumerate() {
            *x += kernel[c][best];
        }
        in_set[best] = true;
        selected.push(best);
        history.push(scores[best]);
    }

    let w = witness(&kernel, &selected);
    let mut candidates: Vec<usize> = (0..n).filter(|c| !in_set[*c]).collect();
    candidates.sort_by(|a, b| w[*b].abs().total_cmp(&w[*a].abs()).then(a.cmp(b)));
    candidates.truncate(m_c);
    Ok(MmdResult {
        gamma,
        prototypes: selected,
        objective_history: history,
        criticism_witness: candidates.iter().map(|c| w[*c]).collect(),
        criticisms: candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<SparseRow> {
        let mut rng = crate::rng::stream(seed, &["mmd-test"]);
        (0..n)
            .map(|_| SparseRow::from_dense(&(0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn first_prototype_maximizes_singleton_objective() {
        let rows = random_rows(40, 5, 1);
        let r = mmd_critic(&rows, 1, 0, Exec::Sequential).unwrap();
        let kernel = rbf_kernel(&rows, r.gamma, Exec::Sequential);
        let brute = (0..rows.len())
            .map(|j| (objective(&kernel, &[j]), j))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
        assert_eq!(r.prototypes[0], brute.1);
    }

    #[test]
    fn incremental_objective_matches_recomputation() {
        let rows = random_rows(30, 4, 2);
        let r = mmd_critic(&rows, 6, 3, Exec::Parallel).unwrap();
        let kernel = rbf_kernel(&rows, r.gamma, Exec::Sequential);
        for (k, j) in r.objective_history.iter().enumerate() {
            assert!((j - objective(&kernel, &r.prototypes[..=k])).abs() < 1e-12);
        }
        assert!(r.criticisms.iter().all(|c| !r.prototypes.contains(c)));
    }

    #[test]
    fn identical_points_have_zero_witness() {
        let rows = vec![SparseRow::from_dense(&[0.6, 0.8]); 4];
        let r = mmd_critic(&rows, 1, 2, Exec::Sequential).unwrap();
        assert_eq!(r.gamma, 1.0);
        assert_eq!(r.prototypes, vec![0]);
        assert_eq!(r.criticisms, vec![1, 2]);
        assert!(r.criticism_witness.iter().all(|w| w.abs() < 1e-15));
    }

    #[test]
    fn too_many_requested() {
        let rows = random_rows(3, 2, 3);
        assert!(mmd_critic(&rows, 2, 2, Exec::Sequential).is_err());
        assert!(mmd_critic(&rows, 0, 1, Exec::Sequential).is_err());
    }
}
