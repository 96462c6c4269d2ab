use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use inducement_core::bart::fit_probit_bart;
use inducement_core::densities::PairMode;
use inducement_core::projection::{model_cells, solve_structural, SolverOptions, Targets};
use inducement_core::rng::chain_rng;
use inducement_core::simulation::{BivariateProbitConfig, Design};
use inducement_core::{BartConfig, ConfounderDensity};

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("probit_bart");
    group.sample_size(10);
    for n in [1_000, 5_000] {
        let design = Design::Bivariate(BivariateProbitConfig {
            n,
            ..BivariateProbitConfig::default()
        });
        let sim = design.generate(&mut chain_rng(1)).unwrap();
        let config = BartConfig {
            burn_in: 0,
            draws: 10,
            ..BartConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("10_sweeps", n), &n, |b, _| {
            b.iter(|| fit_probit_bart(&sim.data.x, &sim.data.treatment, &config, None, 7).unwrap())
        });
    }
    group.finish();
}

fn projection(c: &mut Criterion) {
    let mut rng = chain_rng(2);
    let mut group = c.benchmark_group("projection");
    for (name, d) in [
        ("gaussian", ConfounderDensity::standard()),
        ("sharkfin", ConfounderDensity::sharkfin(0.25, 0.5).unwrap()),
        ("mixture", ConfounderDensity::symmetric_mixture()),
    ] {
        let rule = d.quadrature(64).unwrap();
        let targets: Vec<Targets> = (0..32)
            .map(|_| {
                let b0 = rng.random_range(-2.0..-0.5);
                let b1 = b0 + rng.random_range(0.2..1.2);
                Targets::from_cells(model_cells(b0, b1, rng.random_range(-1.0..0.5), &rule))
            })
            .collect();
        let opts = SolverOptions::default();
        group.bench_function(BenchmarkId::new("solve_32_units", name), |b| {
            b.iter(|| {
                for t in &targets {
                    black_box(solve_structural(t, &rule, None, &opts));
                }
            })
        });
    }
    group.finish();
}

fn quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("quadrature");
    let d = ConfounderDensity::sharkfin(0.75, 1.25).unwrap();
    group.bench_function("build_rule_64", |b| b.iter(|| d.quadrature(black_box(64)).unwrap()));
    let rule = d.quadrature(64).unwrap();
    group.bench_function("marginal_pair", |b| {
        b.iter(|| rule.marginal_pair(black_box(-0.7), black_box(0.3), PairMode::BothPositive))
    });
    group.finish();
}

criterion_group!(benches, sweeps, projection, quadrature);
criterion_main!(benches);
