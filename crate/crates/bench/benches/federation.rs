use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use felb_bench::{clients, ramp};
use felb_core::{proximal_aggregate, run_federated, FederationConfig, RegularizationParams};

fn aggregate(c: &mut Criterion) {
    let mut group = c.benchmark_group("proximal_aggregate");
    let reg = RegularizationParams::default();
    for n in [10, 50] {
        let payloads: Vec<_> = (0..n).map(|i| ramp(5, 100).map(|v| (v + i as f64 * 0.01) % 1.0)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &payloads, |b, p| {
            b.iter(|| proximal_aggregate(black_box(p), &reg, 1.0).unwrap())
        });
    }
    group.finish();
}

fn federated_run(c: &mut Criterion) {
    let parts = clients(500, 100, 5, 10);
    let cfg = FederationConfig {
        max_iterations: 20,
        ..FederationConfig::default()
    };
    let mut group = c.benchmark_group("run_federated");
    group.sample_size(10);
    group.bench_function("500x100 C=10 T=20", |b| b.iter(|| run_federated(black_box(&parts), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, aggregate, federated_run);
criterion_main!(benches);
