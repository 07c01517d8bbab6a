//! Partitioning Around Medoids (BUILD + best-improvement SWAP).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::SparseRow;
use crate::par::Exec;

/// Swaps must lower the cost by more than this to be applied.
pub const SWAP_TOLERANCE: f64 = 1e-12;

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, exec: Exec, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let rows = exec.map_range(n, |i| (0..n).map(|j| if i == j { 0.0 } else { f(i, j) }).collect::<Vec<f64>>());
        DistanceMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Cosine distance `1 - cos`; a zero row has cosine 0 to everything else.
pub fn cosine_distance(a: &SparseRow, b: &SparseRow) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - a.dot(b) / (na * nb)).max(0.0)
}

pub fn cosine_distances(rows: &[SparseRow], exec: Exec) -> DistanceMatrix {
    DistanceMatrix::from_fn(rows.len(), exec, |i, j| cosine_distance(&rows[i], &rows[j]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMedoidsResult {
    /// Medoid indices in selection order after SWAP.
    pub medoids: Vec<usize>,
    /// Index of the nearest medoid slot for each point.
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// Cost after BUILD followed by the cost after each applied swap.
    pub cost_history: Vec<f64>,
}

fn total_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|i| medoids.iter().map(|&m| dist.get(i, m)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Nearest and second-nearest medoid slot and distance per point.
fn nearest_two(dist: &DistanceMatrix, medoids: &[usize]) -> Vec<(usize, f64, f64)> {
    (0..dist.len())
        .map(|i| {
            let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist.get(i, m);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    best = slot;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (best, d1, d2)
        })
        .collect()
}

/// Run PAM on a precomputed distance matrix. Ties resolve to the lowest index.
pub fn pam(dist: &DistanceMatrix, k: usize, exec: Exec) -> Result<KMedoidsResult> {
    let n = dist.len();
    if n == 0 {
        return Err(Error::invalid("no points to cluster"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    // BUILD
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let costs = exec.map_range(n, |c| {
            if medoids.contains(&c) {
                return f64::INFINITY;
            }
            (0..n).map(|i| nearest[i].min(dist.get(i, c))).sum::<f64>()
        });
        let mut best = usize::MAX;
        for c in 0..n {
            if !medoids.contains(&c) && (best == usize::MAX || costs[c] < costs[best]) {
                best = c;
            }
        }
        medoids.push(best);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist.get(i, best));
        }
    }
    let mut cost = total_cost(dist, &medoids);
    let mut history = vec![cost];

    // SWAP
    loop {
        let near = nearest_two(dist, &medoids);
        let candidates = exec.map_range(n, |o| {
            if medoids.contains(&o) {
                return None;
            }
            let mut best: Option<(f64, usize)> = None;
            for slot in 0..k {
                let delta: f64 = (0..n)
                    .map(|i| {
                        let (s, d1, d2) = near[i];
                        let d_o = dist.get(i, o);
                        if s == slot {
                            d2.min(d_o) - d1
                        } else {
                            d_o.min(d1) - d1
                        }
                    })
                    .sum();
                if best.is_none_or(|(b, _)| delta < b) {
                    best = Some((delta, slot));
                }
            }
            best.map(|(delta, slot)| (delta, slot, o))
        });
        let best = candidates
            .into_iter()
            .flatten()
            .fold(None::<(f64, usize, usize)>, |acc, c| match acc {
                Some(a) if a.0 <= c.0 => Some(a),
                _ => Some(c),
            });
        match best {
            Some((delta, slot, o)) if delta < -SWAP_TOLERANCE => {
                medoids[slot] = o;
                let new_cost = total_cost(dist, &medoids);
                if new_cost >= cost - SWAP_TOLERANCE {
                    // numerical noise: the predicted gain did not materialize
                    break;
                }
                cost = new_cost;
                history.push(cost);
            }
            _ => break,
        }
    }
    let assignment = nearest_two(dist, &medoids).into_iter().map(|(s, _, _)| s).collect();
    Ok(KMedoidsResult {
        medoids,
        assignment,
        cost,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_fn(points.len(), Exec::Sequential, |i, j| (points[i] - points[j]).abs())
    }

    #[test]
    fn identical_points_pick_lowest_index() {
        let rows = vec![SparseRow::from_dense(&[1.0, 0.0]); 3];
        let r = pam(&cosine_distances(&rows, Exec::Sequential), 1, Exec::Sequential).unwrap();
        assert_eq!(r.medoids, vec![0]);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn k_equals_n_costs_nothing() {
        let r = pam(&line(&[0.0, 1.0, 5.0]), 3, Exec::Sequential).unwrap();
        assert_eq!(r.cost, 0.0);
        let mut m = r.medoids.clone();
        m.sort();
        assert_eq!(m, vec![0, 1, 2]);
    }

    #[test]
    fn two_clusters_on_a_line() {
        let r = pam(&line(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]), 2, Exec::Parallel).unwrap();
        let mut m = r.medoids.clone();
        m.sort();
        assert_eq!(m, vec![1, 4]);
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bad_k() {
        assert!(pam(&line(&[0.0, 1.0]), 3, Exec::Sequential).is_err());
        assert!(pam(&line(&[]), 1, Exec::Sequential).is_err());
    }
}
