use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use explabox::explain::kmedoids::{cosine_distances, pam};
use explabox::explain::mmd::mmd_critic;
use explabox::explain::shapley::exact_from_table;
use explabox::ingest::SparseRow;
use explabox::par::Exec;
use explabox::rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn rows(n: usize, dim: usize) -> Vec<SparseRow> {
    let mut r = rng::stream(1, &["bench", "rows"]);
    (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..dim)
                .map(|_| if r.random_bool(0.2) { r.random_range(0.0..1.0) } else { 0.0 })
                .collect();
            SparseRow::from_dense(&dense)
        })
        .collect()
}

fn shapley_table(c: &mut Criterion) {
    let d = 16;
    let mut r = rng::stream(2, &["bench", "table"]);
    let table: Vec<f64> = (0..1usize << d).map(|_| r.random_range(0.0..1.0)).collect();
    let mut group = c.benchmark_group("exact_shapley_d16");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exact_from_table(d, &table, exec).unwrap())
        });
    }
    group.finish();
}

fn kmedoids(c: &mut Criterion) {
    let data = rows(400, 200);
    let mut group = c.benchmark_group("cosine_pam_n400_k5");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pam(&cosine_distances(&data, exec), 5, exec).unwrap())
        });
    }
    group.finish();
}

fn mmd(c: &mut Criterion) {
    let data = rows(300, 200);
    let mut group = c.benchmark_group("mmd_critic_n300");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mmd_critic(&data, 10, 5, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, shapley_table, kmedoids, mmd);
criterion_main!(benches);
