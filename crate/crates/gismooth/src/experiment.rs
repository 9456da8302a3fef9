//! Monte Carlo RMSE harness.
//!
//! For each run a trajectory is simulated from a per-run seed derived from
//! the master seed, every configured strategy smooths the same measurements,
//! and per-step squared errors plus phase timings are collected. Results are
//! reduced in run order regardless of execution order, and the per-run seeds
//! are counter-based, so the parallel and serial paths produce identical
//! statistics.
//!
//! Runs are independent work items; with the `parallel` feature they execute
//! on a rayon pool (capped by the `GISMOOTH_THREADS` environment variable,
//! default: available parallelism), otherwise sequentially.

use nalgebra::DVector;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::GaussianBelief;
use crate::models::{simulate, StateSpaceModel};
use crate::rng;
use crate::smoother::{smooth, SmoothingResult};
use crate::strategies::{strategy_by_name, MomentStrategy};

/// Covariance eigenvalues above this mark a run as diverged.
pub const DIVERGENCE_COVARIANCE_LIMIT: f64 = 1e12;

/// Environment variable capping the Monte Carlo worker count.
pub const WORKER_ENV_VAR: &str = "GISMOOTH_THREADS";

/// Per-method aggregate over the surviving runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    /// `filter_rmse[step][state]`, steps indexed from 1.
    pub filter_rmse: Vec<Vec<f64>>,
    pub smoother_rmse: Vec<Vec<f64>>,
    /// Time-average of the per-step RMSE, one value per state.
    pub filter_avg: Vec<f64>,
    pub smoother_avg: Vec<f64>,
    /// Summed forward-phase wall time over surviving runs.
    pub filter_seconds: f64,
    /// Summed forward+backward wall time.
    pub smoother_seconds: f64,
    /// Wall time relative to the ekf method (NaN when ekf is absent).
    pub filter_ret: f64,
    pub smoother_ret: f64,
}

/// One method's entry in the report; `stats` is `None` when every run
/// diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub name: String,
    pub diverged_runs: usize,
    pub stats: Option<MethodStats>,
}

/// Full output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub steps: usize,
    pub state_dim: usize,
    pub runs: usize,
    pub methods: Vec<MethodReport>,
}

impl RmseReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Outcome of one (run, method) cell.
enum RunOutcome {
    Diverged,
    Finished {
        filter_sq: Vec<f64>,
        smoother_sq: Vec<f64>,
        forward_seconds: f64,
        total_seconds: f64,
    },
}

/// Runs the experiment, in parallel when the `parallel` feature is enabled.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RmseReport> {
    #[cfg(feature = "parallel")]
    {
        run_experiment_parallel(config)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_experiment_serial(config)
    }
}

/// Sequential Monte Carlo loop; always available as the reference path.
pub fn run_experiment_serial(config: &ExperimentConfig) -> Result<RmseReport> {
    let setup = Setup::prepare(config)?;
    let outcomes = (0..config.runs)
        .map(|run| setup.execute_run(run))
        .collect::<Result<Vec<_>>>()?;
    setup.reduce(outcomes)
}

/// Parallel Monte Carlo loop over a rayon pool.
#[cfg(feature = "parallel")]
pub fn run_experiment_parallel(config: &ExperimentConfig) -> Result<RmseReport> {
    use rayon::prelude::*;

    let setup = Setup::prepare(config)?;
    let collect = || {
        (0..config.runs)
            .into_par_iter()
            .map(|run| setup.execute_run(run))
            .collect::<Result<Vec<_>>>()
    };
    let outcomes = match worker_cap()? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(collect),
        None => collect(),
    }?;
    setup.reduce(outcomes)
}

#[cfg(feature = "parallel")]
fn worker_cap() -> Result<Option<usize>> {
    match std::env::var(WORKER_ENV_VAR) {
        Ok(value) => {
            let threads: usize = value.parse().map_err(|_| {
                Error::InvalidParameter(format!("{WORKER_ENV_VAR} must be a positive integer"))
            })?;
            if threads == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{WORKER_ENV_VAR} must be a positive integer"
                )));
            }
            Ok(Some(threads))
        }
        Err(_) => Ok(None),
    }
}

struct Setup {
    model: StateSpaceModel,
    init: GaussianBelief,
    strategies: Vec<Box<dyn MomentStrategy>>,
    x0: DVector<f64>,
    steps: usize,
    runs: usize,
    seed: u64,
}

impl Setup {
    fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            model: config.build_model()?,
            init: config.init_belief()?,
            strategies: config
                .strategies
                .iter()
                .map(|name| strategy_by_name(name))
                .collect::<Result<_>>()?,
            x0: config.x0.clone(),
            steps: config.steps,
            runs: config.runs,
            seed: config.seed,
        })
    }

    /// Simulates one trajectory and smooths it with every strategy.
    fn execute_run(&self, run: usize) -> Result<Vec<RunOutcome>> {
        let run_seed = rng::derive_key(&[self.seed, run as u64]);
        let trajectory = simulate(&self.model, &self.x0, self.steps, run_seed)?;

        self.strategies
            .iter()
            .map(|strategy| {
                match smooth(
                    &self.model,
                    trajectory.measurements(),
                    &self.init,
                    strategy.as_ref(),
                ) {
                    Ok(result) => Ok(self.summarize(&result, trajectory.states())),
                    // A lost recursion is a data point, not a crash.
                    Err(Error::NumericalFailure { .. }) => Ok(RunOutcome::Diverged),
                    Err(other) => Err(other),
                }
            })
            .collect()
    }

    fn summarize(&self, result: &SmoothingResult, truth: &[DVector<f64>]) -> RunOutcome {
        let n = self.model.state_dim();
        let mut filter_sq = Vec::with_capacity(self.steps * n);
        let mut smoother_sq = Vec::with_capacity(self.steps * n);
        for ((record, smoothed), truth_k) in result.forward.iter().zip(&result.smoothed).zip(truth)
        {
            if !is_sane(&record.filtered) || !is_sane(smoothed) {
                return RunOutcome::Diverged;
            }
            for i in 0..n {
                let fe = record.filtered.mean()[i] - truth_k[i];
                let se = smoothed.mean()[i] - truth_k[i];
                filter_sq.push(fe * fe);
                smoother_sq.push(se * se);
            }
        }
        RunOutcome::Finished {
            filter_sq,
            smoother_sq,
            forward_seconds: result.timings.forward.as_secs_f64(),
            total_seconds: (result.timings.forward + result.timings.backward).as_secs_f64(),
        }
    }

    /// Deterministic reduction in run order.
    fn reduce(&self, outcomes: Vec<Vec<RunOutcome>>) -> Result<RmseReport> {
        let n = self.model.state_dim();
        let cells = self.steps * n;
        let method_count = self.strategies.len();

        let mut filter_sums = vec![vec![0.0f64; cells]; method_count];
        let mut smoother_sums = vec![vec![0.0f64; cells]; method_count];
        let mut forward_seconds = vec![0.0f64; method_count];
        let mut total_seconds = vec![0.0f64; method_count];
        let mut survivors = vec![0usize; method_count];

        for run_outcomes in &outcomes {
            for (m, outcome) in run_outcomes.iter().enumerate() {
                if let RunOutcome::Finished {
                    filter_sq,
                    smoother_sq,
                    forward_seconds: fwd,
                    total_seconds: total,
                } = outcome
                {
                    survivors[m] += 1;
                    forward_seconds[m] += fwd;
                    total_seconds[m] += total;
                    for (acc, sq) in filter_sums[m].iter_mut().zip(filter_sq) {
                        *acc += sq;
                    }
                    for (acc, sq) in smoother_sums[m].iter_mut().zip(smoother_sq) {
                        *acc += sq;
                    }
                }
            }
        }

        let ekf_index = self.strategies.iter().position(|s| s.name() == "ekf");
        let ekf_times = ekf_index
            .and_then(|i| (survivors[i] > 0).then_some((forward_seconds[i], total_seconds[i])));

        let methods = (0..method_count)
            .map(|m| {
                let name = self.strategies[m].name().to_string();
                let diverged_runs = self.runs - survivors[m];
                if survivors[m] == 0 {
                    return MethodReport {
                        name,
                        diverged_runs,
                        stats: None,
                    };
                }
                let count = survivors[m] as f64;
                let to_rmse = |sums: &[f64]| -> Vec<Vec<f64>> {
                    (0..self.steps)
                        .map(|k| (0..n).map(|i| (sums[k * n + i] / count).sqrt()).collect())
                        .collect()
                };
                let filter_rmse = to_rmse(&filter_sums[m]);
                let smoother_rmse = to_rmse(&smoother_sums[m]);
                let time_average = |rmse: &[Vec<f64>]| -> Vec<f64> {
                    (0..n)
                        .map(|i| rmse.iter().map(|row| row[i]).sum::<f64>() / self.steps as f64)
                        .collect()
                };
                let filter_avg = time_average(&filter_rmse);
                let smoother_avg = time_average(&smoother_rmse);
                let (filter_ret, smoother_ret) = match ekf_times {
                    Some((ekf_fwd, ekf_total)) => {
                        (forward_seconds[m] / ekf_fwd, total_seconds[m] / ekf_total)
                    }
                    None => (f64::NAN, f64::NAN),
                };
                MethodReport {
                    name,
                    diverged_runs,
                    stats: Some(MethodStats {
                        filter_rmse,
                        smoother_rmse,
                        filter_avg,
                        smoother_avg,
                        filter_seconds: forward_seconds[m],
                        smoother_seconds: total_seconds[m],
                        filter_ret,
                        smoother_ret,
                    }),
                }
            })
            .collect();

        Ok(RmseReport {
            steps: self.steps,
            state_dim: n,
            runs: self.runs,
            methods,
        })
    }
}

fn is_sane(belief: &GaussianBelief) -> bool {
    if belief.mean().iter().any(|v| !v.is_finite()) {
        return false;
    }
    let cov = belief.covariance();
    if cov.iter().any(|v| !v.is_finite()) {
        return false;
    }
    // PSD covariance: the largest eigenvalue is bounded by the trace.
    let trace: f64 = cov.trace();
    if trace > DIVERGENCE_COVARIANCE_LIMIT {
        let max_eigen = cov.clone().symmetric_eigen().eigenvalues.max();
        return max_eigen <= DIVERGENCE_COVARIANCE_LIMIT;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, ModelConfig};
    use nalgebra::DMatrix;
    use std::path::PathBuf;

    fn linear_config(runs: usize, steps: usize) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelConfig::Generic {
                dynamics: vec![
                    crate::polynomial::Polynomial::parse(2, "0.9*x1 + 0.1*x2").unwrap(),
                    crate::polynomial::Polynomial::parse(2, "-0.1*x1 + 0.85*x2").unwrap(),
                ],
                measurement: vec![crate::polynomial::Polynomial::parse(2, "1.0*x1").unwrap()],
            },
            process_noise: DMatrix::identity(2, 2) * 0.01,
            measurement_noise: DMatrix::from_row_slice(1, 1, &[0.1]),
            steps,
            runs,
            seed: 99,
            x0: nalgebra::DVector::from_vec(vec![1.0, 0.0]),
            init_mean: nalgebra::DVector::from_vec(vec![0.0, 0.0]),
            init_covariance: DMatrix::identity(2, 2),
            strategies: vec!["gi".into(), "ckf".into(), "ukf".into(), "ekf".into()],
            output_dir: PathBuf::from("results"),
        }
    }

    #[test]
    fn affine_models_make_all_strategies_identical() {
        let config = linear_config(1, 1);
        let report = run_experiment_serial(&config).unwrap();
        let reference = report.methods[0].stats.as_ref().unwrap();
        for method in &report.methods[1..] {
            let stats = method.stats.as_ref().unwrap();
            for k in 0..report.steps {
                for i in 0..report.state_dim {
                    assert!(
                        (stats.filter_rmse[k][i] - reference.filter_rmse[k][i]).abs() < 1e-10,
                        "{}",
                        method.name
                    );
                    assert!(
                        (stats.smoother_rmse[k][i] - reference.smoother_rmse[k][i]).abs() < 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn final_step_filter_and_smoother_rmse_agree_exactly() {
        let config = linear_config(5, 20);
        let report = run_experiment_serial(&config).unwrap();
        for method in &report.methods {
            let stats = method.stats.as_ref().unwrap();
            let last = report.steps - 1;
            assert_eq!(stats.filter_rmse[last], stats.smoother_rmse[last]);
        }
    }

    #[test]
    fn ekf_ret_is_one_by_construction() {
        let config = linear_config(3, 10);
        let report = run_experiment_serial(&config).unwrap();
        let ekf = report.method("ekf").unwrap().stats.as_ref().unwrap();
        assert_eq!(ekf.filter_ret, 1.0);
        assert_eq!(ekf.smoother_ret, 1.0);
    }

    #[test]
    fn ret_is_nan_without_an_ekf_baseline() {
        let mut config = linear_config(2, 5);
        config.strategies = vec!["gi".into()];
        let report = run_experiment_serial(&config).unwrap();
        let gi = report.method("gi").unwrap().stats.as_ref().unwrap();
        assert!(gi.filter_ret.is_nan());
    }

    #[test]
    fn reports_are_deterministic_for_a_fixed_seed() {
        let config = linear_config(6, 15);
        let a = run_experiment_serial(&config).unwrap();
        let b = run_experiment_serial(&config).unwrap();
        for (ma, mb) in a.methods.iter().zip(&b.methods) {
            let sa = ma.stats.as_ref().unwrap();
            let sb = mb.stats.as_ref().unwrap();
            assert_eq!(sa.filter_rmse, sb.filter_rmse);
            assert_eq!(sa.smoother_rmse, sb.smoother_rmse);
            assert_eq!(ma.diverged_runs, mb.diverged_runs);
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_serial_reports_are_identical() {
        let config = linear_config(8, 12);
        let serial = run_experiment_serial(&config).unwrap();
        let parallel = run_experiment_parallel(&config).unwrap();
        assert_eq!(serial.steps, parallel.steps);
        for (ms, mp) in serial.methods.iter().zip(&parallel.methods) {
            assert_eq!(ms.name, mp.name);
            assert_eq!(ms.diverged_runs, mp.diverged_runs);
            let ss = ms.stats.as_ref().unwrap();
            let sp = mp.stats.as_ref().unwrap();
            // Bit-identical statistics; timings are wall-clock and differ.
            assert_eq!(ss.filter_rmse, sp.filter_rmse);
            assert_eq!(ss.smoother_rmse, sp.smoother_rmse);
            assert_eq!(ss.filter_avg, sp.filter_avg);
            assert_eq!(ss.smoother_avg, sp.smoother_avg);
        }
    }

    #[test]
    fn diverging_method_is_reported_absent_not_crashed() {
        // An explosive generic model: ekf covariance overflows quickly.
        let config = ExperimentConfig {
            model: ModelConfig::Generic {
                dynamics: vec![
                    crate::polynomial::Polynomial::parse(1, "200.0*x1 + 1.0*x1^3").unwrap(),
                ],
                measurement: vec![crate::polynomial::Polynomial::parse(1, "1.0*x1").unwrap()],
            },
            process_noise: DMatrix::from_row_slice(1, 1, &[0.0]),
            measurement_noise: DMatrix::from_row_slice(1, 1, &[1e-6]),
            steps: 60,
            runs: 2,
            seed: 5,
            x0: nalgebra::DVector::from_vec(vec![2.0]),
            init_mean: nalgebra::DVector::from_vec(vec![2.0]),
            init_covariance: DMatrix::from_row_slice(1, 1, &[0.5]),
            strategies: vec!["ekf".into()],
            output_dir: PathBuf::from("results"),
        };
        let report = run_experiment_serial(&config).unwrap();
        let ekf = report.method("ekf").unwrap();
        assert_eq!(ekf.diverged_runs, 2);
        assert!(ekf.stats.is_none());
    }
}
