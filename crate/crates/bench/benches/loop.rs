use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use scl_bench::{faulty, sample_specs, sample_trace, slice_manifest};
use scl_core::metrics::score_episode;
use scl_core::runtime::{replay, run_episode, System, Trace};
use scl_core::scenarios::{generate_episode, Scenario};
use scl_core::suite::run_suite;

fn episodes(c: &mut Criterion) {
    let specs = sample_specs();
    let mut group = c.benchmark_group("run_episode");
    for system in System::ALL {
        let config = faulty(system);
        for spec in &specs {
            group.bench_with_input(BenchmarkId::new(system.as_str(), &spec.key), spec, |b, spec| {
                b.iter(|| run_episode(black_box(spec), &config, 0).unwrap())
            });
        }
    }
    group.finish();
}

fn traces(c: &mut Criterion) {
    let trace = sample_trace();
    let text = trace.to_lines();
    let spec = generate_episode(Scenario::A, 0, 0).unwrap();
    c.bench_function("trace/parse", |b| b.iter(|| Trace::from_lines(black_box(&text)).unwrap()));
    c.bench_function("trace/verify", |b| b.iter(|| black_box(&trace).verify().unwrap()));
    c.bench_function("trace/replay", |b| b.iter(|| replay(black_box(&trace)).unwrap()));
    c.bench_function("trace/score", |b| b.iter(|| score_episode(&spec, black_box(&trace))));
}

fn suite(c: &mut Criterion) {
    let manifest = slice_manifest();
    let mut group = c.benchmark_group("suite");
    group.sample_size(20);
    group.bench_function("slice_all_systems", |b| b.iter(|| run_suite(black_box(&manifest), None).unwrap()));
    group.finish();
}

criterion_group!(benches, episodes, traces, suite);
criterion_main!(benches);
