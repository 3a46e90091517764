//! Default rayon pool against a single-thread pool on the three hot paths:
//! Monte-Carlo MSE, the subspace-size curve, and a small backtest sweep.
//!
//! Build with `--no-default-features` to time the fully sequential code path
//! (no rayon at all) for comparison.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rayon::ThreadPoolBuilder;
use subspace_forecast::backtest::{evaluate_candidates, run_backtest, SelectionObjective, SweepConfig};
use subspace_forecast::oracle::{mc_mse, GaussianSpec};
use subspace_forecast::{fit_gauss_bayes, fixtures, CovarianceModel};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
        ("sequential", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench_mc_mse(c: &mut Criterion) {
    let (sigma, m) = fixtures::oracle_covariance(2024);
    let model = CovarianceModel::from_covariance(sigma.clone(), m).unwrap();
    let gb = fit_gauss_bayes(&model).unwrap();
    let spec = GaussianSpec::centered(sigma, 1).unwrap();
    let mut group = c.benchmark_group("mc_mse_1e5");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| mc_mse(&spec, &gb, m, black_box(100_000)).unwrap())));
    }
    group.finish();
}

fn bench_l_curve(c: &mut Criterion) {
    let spectrum = fixtures::log_spaced_spectrum(120, 1e6);
    let model = CovarianceModel::from_covariance(fixtures::covariance_with_spectrum(&spectrum, 3), 100).unwrap();
    let mut group = c.benchmark_group("l_curve_m100");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| pool.install(|| evaluate_candidates(black_box(&model), SelectionObjective::TheoreticalRdMse)))
        });
    }
    group.finish();
}

fn bench_backtest(c: &mut Criterion) {
    let series = fixtures::price_series("GE", 3000, 11);
    let sweep = SweepConfig {
        m_values: vec![20, 50, 80],
        n_test: 200,
        ..SweepConfig::default()
    };
    let mut group = c.benchmark_group("backtest_3x2");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| run_backtest(black_box(&series), &sweep).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, bench_mc_mse, bench_l_curve, bench_backtest);
criterion_main!(benches);
