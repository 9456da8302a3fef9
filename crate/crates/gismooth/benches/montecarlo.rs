//! Monte Carlo harness throughput: serial loop vs rayon data-parallel loop,
//! plus the closed-form moment transform on the quartic benchmark dynamics.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use std::path::PathBuf;

use gismooth::config::{ExperimentConfig, ModelConfig};
use gismooth::experiment::run_experiment_serial;
use gismooth::linalg::GaussianBelief;
use gismooth::models::vdp_model;
use gismooth::strategies::gi_predict;

fn bench_config() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::Vdp {
            amplitude: 100.0,
            frequency: 1.85 * std::f64::consts::PI / 2.0,
            delta: 0.01,
        },
        process_noise: DMatrix::identity(3, 3) * 1e-3,
        measurement_noise: DMatrix::identity(2, 2) * 1e-1,
        steps: 25,
        runs: 4,
        seed: 7,
        x0: DVector::from_vec(vec![2.75, 0.0, 2.0]),
        init_mean: DVector::from_vec(vec![0.0, -3.0, 1.0]),
        init_covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 0.5])),
        strategies: vec!["gi".into(), "ckf".into(), "ukf".into(), "ekf".into()],
        output_dir: PathBuf::from("results"),
    }
}

fn monte_carlo_loops(c: &mut Criterion) {
    let config = bench_config();

    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    group.bench_function("serial", |b| {
        b.iter(|| run_experiment_serial(&config).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| gismooth::experiment::run_experiment_parallel(&config).unwrap())
    });
    group.finish();
}

fn gi_transform(c: &mut Criterion) {
    let model = vdp_model(
        100.0,
        1.85 * std::f64::consts::PI / 2.0,
        0.01,
        DMatrix::identity(3, 3) * 1e-3,
        DMatrix::identity(2, 2) * 1e-1,
    )
    .unwrap();
    let dynamics = model.dynamics_at(1);
    let belief = GaussianBelief::new(
        DVector::from_vec(vec![2.75, 0.0, 2.0]),
        DMatrix::identity(3, 3) * 0.1,
    )
    .unwrap();
    // A dense covariance defeats the zero-pruning in the expansion, which is
    // the situation mid-filter.
    let dense = GaussianBelief::new(
        DVector::from_vec(vec![2.75, 0.0, 2.0]),
        DMatrix::from_row_slice(
            3,
            3,
            &[0.10, 0.03, 0.01, 0.03, 0.20, 0.05, 0.01, 0.05, 0.15],
        ),
    )
    .unwrap();

    c.bench_function("gi_predict_vdp_diagonal", |b| {
        b.iter(|| gi_predict(&dynamics, model.process_noise(), &belief).unwrap())
    });
    c.bench_function("gi_predict_vdp_dense", |b| {
        b.iter(|| gi_predict(&dynamics, model.process_noise(), &dense).unwrap())
    });
}

criterion_group!(benches, monte_carlo_loops, gi_transform);
criterion_main!(benches);
