//! Hot-path benchmarks: topology rebuilds dominate simulation cost, the
//! transport solver dominates the mean-field experiments, and the swarm
//! right-hand side bounds the pattern runs.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use topoflock_core::dynamics::{rhs, simulate, SimOptions};
use topoflock_core::meanfield::{wasserstein1, EmpiricalMeasure};
use topoflock_core::scenarios::random_cloud;
use topoflock_core::swarm::{rhs_swarm, unit_box_ensemble, SwarmParams};
use topoflock_core::topology::communication_matrix;
use topoflock_core::WeightFunction;

fn bench_topology_rebuild(c: &mut Criterion) {
    let mut group = c.benchmark_group("topology_rebuild");
    for n in [16_usize, 64, 256] {
        let cloud = random_cloud(n, 2, 2.0, 1.0, 11).unwrap();
        let weights = WeightFunction::topological(vec![1.0; n]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| communication_matrix(black_box(&cloud), black_box(&weights)).unwrap())
        });
    }
    group.finish();
}

fn bench_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for n in [16_usize, 64, 256] {
        let cloud = random_cloud(n, 2, 2.0, 1.0, 13).unwrap();
        let weights = WeightFunction::topological(vec![1.0; n]).unwrap();
        let topo = communication_matrix(&cloud, &weights).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| rhs(black_box(&cloud), black_box(&topo)).unwrap())
        });
    }
    group.finish();
}

fn bench_simulate_short(c: &mut Criterion) {
    let cloud = random_cloud(32, 2, 2.0, 1.0, 17).unwrap();
    let weights = WeightFunction::topological(vec![1.0; 32]).unwrap();
    let opts = SimOptions { sample_every: 10, ..SimOptions::default() };
    c.bench_function("simulate_32_agents_1s", |b| {
        b.iter(|| simulate(black_box(&cloud), black_box(&weights), 1e-2, 1.0, &opts).unwrap())
    });
}

fn bench_wasserstein(c: &mut Criterion) {
    let mut group = c.benchmark_group("wasserstein1");
    for n in [32_usize, 128] {
        let a = EmpiricalMeasure::from_ensemble(&random_cloud(n, 2, 1.0, 1.0, 19).unwrap());
        let b_cloud = EmpiricalMeasure::from_ensemble(&random_cloud(n, 2, 1.0, 1.0, 23).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| wasserstein1(black_box(&a), black_box(&b_cloud)).unwrap())
        });
    }
    group.finish();
}

fn bench_swarm_rhs(c: &mut Criterion) {
    let params = SwarmParams::default();
    let cloud = unit_box_ensemble(100, 29).unwrap();
    c.bench_function("swarm_rhs_100_agents", |b| {
        b.iter(|| rhs_swarm(black_box(&cloud), black_box(&params)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_topology_rebuild,
    bench_rhs,
    bench_simulate_short,
    bench_wasserstein,
    bench_swarm_rhs
);
criterion_main!(benches);
