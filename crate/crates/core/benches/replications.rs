use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dpcsim::analysis::offline_oracle;
use dpcsim::preset::{fig2_users, levels, Preset};
use dpcsim::sim::{run_batch, Execution, SamplePath};

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("fig2_replications");
    group.sample_size(10);
    let configs: Vec<_> = Preset::Fig2Tradeoff
        .expand()
        .into_iter()
        .map(|mut cfg| {
            cfg.horizon = 20_000;
            cfg.replications = 8;
            cfg.trace_every = 1_000;
            cfg
        })
        .collect();
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_batch(black_box(&configs), exec).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let users = fig2_users();
    let levels = levels();
    let path = SamplePath::draw(&users, 3, 0, 12);
    c.bench_function("offline_oracle_2users_12slots", |b| {
        b.iter(|| offline_oracle(black_box(&users), &levels, black_box(&path)).unwrap())
    });
}

criterion_group!(benches, replications, oracle);
criterion_main!(benches);
