use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semimart_core::config::GridConfig;
use semimart_core::*;

fn bs() -> ModelSpec {
    builtin_model("black_scholes", &ModelParams::new().with("mu", 0.05).with("sigma", 0.2)).unwrap()
}

fn bench_simulate(c: &mut Criterion) {
    let model = bs();
    let mut group = c.benchmark_group("simulate");
    for steps in [256usize, 1024] {
        let grid = make_grid(1.0, steps, GridScheme::Uniform).unwrap();
        group.bench_with_input(BenchmarkId::new("black_scholes_1000_paths", steps), &grid, |b, grid| {
            b.iter(|| simulate(&model, grid, 1000, 1).unwrap())
        });
    }
    group.finish();
}

fn bench_solve_lambda(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lambda");
    for d in [1usize, 3, 5] {
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                v[i * d + j] = if i == j { 2.0 } else { 0.5 / (1 + i + j) as f64 };
            }
        }
        let g: Vec<f64> = (0..d).map(|k| 0.1 * (k + 1) as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| solve_lambda(black_box(&v), black_box(&g), 1e-6).unwrap())
        });
    }
    group.finish();
}

fn bench_density(c: &mut Criterion) {
    let grid = make_grid(1.0, 256, GridScheme::Uniform).unwrap();
    let bundle = simulate(&bs(), &grid, 1000, 2).unwrap();
    let (field, _) = check_structure(&bundle, 1e-6).unwrap();
    let sigma = StoppingTimeField::constant(1000, 0);
    c.bench_function("check_structure_1000x256", |b| b.iter(|| check_structure(&bundle, 1e-6).unwrap()));
    c.bench_function("doleans_exponential_1000x256", |b| {
        b.iter(|| doleans_exponential(&bundle, &field, &sigma).unwrap())
    });
}

fn bench_diagnose(c: &mut Criterion) {
    let model = bs();
    let mut cfg = DiagnoseConfig::new(GridConfig::uniform(1.0, 64), 1000, 3);
    cfg.explosion.n_paths = 100;
    let mut group = c.benchmark_group("diagnose");
    group.sample_size(10);
    group.bench_function("black_scholes_1000x64", |b| b.iter(|| classify_market(&model, &cfg)));
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_solve_lambda, bench_density, bench_diagnose);
criterion_main!(benches);
