use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use triplet_core::budget::{propagate_with, Quantity};
use triplet_core::config::bundled_paper_table1;
use triplet_core::detection::{simulate_event_driven_with, simulate_seeds, SimMode};
use triplet_core::exec::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn propagation(c: &mut Criterion) {
    let inputs = bundled_paper_table1().budget_inputs;
    let mut g = c.benchmark_group("propagate_1e5");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| propagate_with(&inputs, Quantity::RTriplePerHour, 100_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn aggregated_seeds(c: &mut Criterion) {
    let config = bundled_paper_table1().experiment;
    let seeds: Vec<u64> = (0..100).collect();
    let mut g = c.benchmark_group("aggregated_100_seeds");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_seeds(&config, &seeds, exec).unwrap())
        });
    }
    g.finish();
}

fn event_driven(c: &mut Criterion) {
    let mut config = bundled_paper_table1().experiment;
    config.mode = SimMode::EventDriven;
    config.duration_s = 600.0;
    let mut g = c.benchmark_group("event_driven_10_min");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_event_driven_with(&config, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, propagation, aggregated_seeds, event_driven);
criterion_main!(benches);
