use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depmix_bench::{fixture, short_chain};
use depmix_core::predictive::{y_grid, PredictOptions, DEFAULT_GRID_SIZE};
use depmix_core::{binder_point_estimate, posterior_similarity, predictive_summary, Example, ModelFamily};

/// Predictive summary over 200 draws at 50 test points.
fn summaries(c: &mut Criterion) {
    let mut group = c.benchmark_group("predictive_summary");
    group.sample_size(10);
    for family in [ModelFamily::Lddp, ModelFamily::Nw, ModelFamily::JointDp] {
        let (data, spec) = fixture(Example::One, 200, family);
        let chain = short_chain(&data, &spec, 200);
        let grid = y_grid(&data, DEFAULT_GRID_SIZE);
        let points = Example::One.test_set(50, 7);
        let opts = PredictOptions::default();
        group.bench_function(BenchmarkId::from_parameter(family), |b| {
            b.iter(|| predictive_summary(&spec, &chain.draws, &points, &grid, &opts).unwrap())
        });
    }
    group.finish();
}

fn binder(c: &mut Criterion) {
    let (data, spec) = fixture(Example::Two, 400, ModelFamily::Lddp);
    let chain = short_chain(&data, &spec, 200);
    let labels: Vec<Vec<usize>> = chain.draws.iter().map(|d| d.allocations.clone()).collect();
    c.bench_function("binder_n400_m200", |b| {
        b.iter(|| {
            let sim = posterior_similarity(&labels).unwrap();
            binder_point_estimate(&labels, &sim).unwrap()
        })
    });
}

criterion_group!(benches, summaries, binder);
criterion_main!(benches);
