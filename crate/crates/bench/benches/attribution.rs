use std::hint::black_box;

use biasprobe_core::oracle::MockModel;
use biasprobe_core::{bindings, exact_shapley, sampled_shapley, CoalitionMask, PromptTemplate};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect()
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_shapley");
    group.sample_size(10);
    for n in [8usize, 12, 16, 20] {
        let game = MockModel::logistic(-1.0, weights(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &game, |b, g| {
            b.iter(|| exact_shapley(black_box(g)).unwrap())
        });
    }
    group.finish();
}

fn sampled(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampled_shapley");
    group.sample_size(10);
    let game = MockModel::logistic(-1.0, weights(24));
    for m in [100usize, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| sampled_shapley(&game, black_box(m), 7).unwrap())
        });
    }
    group.finish();
}

fn render(c: &mut Criterion) {
    let source: String = (0..20).map(|i| format!("[[word{i}]] ")).collect::<String>() + "{tail}";
    let template = PromptTemplate::parse(&source).unwrap();
    let vars = bindings([("tail", "end")]);
    let mask = CoalitionMask::from_bits(0b1010_1010_1010_1010_1010, 20).unwrap();
    c.bench_function("render_20_players", |b| {
        b.iter(|| template.render(black_box(mask), &vars).unwrap())
    });
}

criterion_group!(benches, exact, sampled, render);
criterion_main!(benches);
