use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hmemsim_bench::{migrating_cfg, static_cfg, steady_spec, zipf_spec};
use hmemsim_core::run_synthetic;
use hmemsim_core::trace::SyntheticTrace;

fn bench_simulation(c: &mut Criterion) {
    let requests = 50_000u64;
    let mut group = c.benchmark_group("simulate");
    group.throughput(Throughput::Elements(requests));
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("static_uniform", requests), |b| {
        let cfg = static_cfg();
        let spec = steady_spec(requests);
        b.iter(|| run_synthetic(&cfg, &spec, false).unwrap());
    });

    group.bench_function(BenchmarkId::new("hotness_zipfian", requests), |b| {
        let cfg = migrating_cfg();
        let spec = zipf_spec(requests);
        b.iter(|| run_synthetic(&cfg, &spec, false).unwrap());
    });

    group.finish();
}

fn bench_trace_generation(c: &mut Criterion) {
    let requests = 100_000u64;
    let mut group = c.benchmark_group("generate");
    group.throughput(Throughput::Elements(requests));
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("zipfian", requests), |b| {
        let cfg = static_cfg();
        let spec = zipf_spec(requests);
        b.iter(|| {
            SyntheticTrace::new(&cfg, &spec, 1)
                .unwrap()
                .map(|r| r.addr)
                .fold(0u64, u64::wrapping_add)
        });
    });

    group.finish();
}

criterion_group!(benches, bench_simulation, bench_trace_generation);
criterion_main!(benches);
