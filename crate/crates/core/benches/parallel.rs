//! Sequential vs parallel sweep throughput on a fixed generated workload.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use pta_core::batch::sweep;
use pta_core::benchgen::GenSpec;

fn workload() -> Vec<GenSpec> {
    (0..24u64)
        .map(|seed| GenSpec { seed, functions: 14, side_effect_rate: 0.4, ..GenSpec::default() })
        .collect()
}

fn bench_sweep(c: &mut Criterion) {
    let specs = workload();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter_batched(|| specs.clone(), |s| sweep(&s, false).unwrap(), BatchSize::SmallInput)
    });
    group.bench_function("parallel", |b| {
        b.iter_batched(|| specs.clone(), |s| sweep(&s, true).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
