//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled (the default) [`Exec::Parallel`] runs
//! on the rayon global pool. Without it every call runs sequentially. Results
//! are always collected in index order, so the choice never changes output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for the inner loops of the analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Map `f` over `0..n`, returning results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Map `f` over a slice, returning results in slice order.
    pub fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let seq = Exec::Sequential.map_range(1000, |i| (i * i) as u64);
        let par = Exec::Parallel.map_range(1000, |i| (i * i) as u64);
        assert_eq!(seq, par);
        let words = ["a", "bb", "ccc"];
        assert_eq!(Exec::Parallel.map_slice(&words, |w| w.len()), vec![1, 2, 3]);
    }
}
