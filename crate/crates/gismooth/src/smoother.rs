//! Forward Gaussian filter and backward Rauch–Tung–Striebel recursion,
//! generic over any [`MomentStrategy`].
//!
//! The forward pass stores, for every step, the predicted belief, the
//! filtered belief, the gain, the innovation, and the cross-timestep
//! covariance `Cov(x_{k-1}, x_k)` that the prediction already produced. The
//! backward pass then runs on stored quantities alone — no moment rule is
//! invoked again — because the smoother gain at `k` only needs
//! `Cov(x_k, x_{k+1})` and the predicted covariance at `k+1`.
//!
//! Covariance updates use subtraction followed by symmetrize-and-project
//! rather than the Joseph form; the projection is required by the backward
//! pass anyway.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, GaussianBelief};
use crate::models::StateSpaceModel;
use crate::strategies::MomentStrategy;

/// Everything the forward pass knows about one time step.
#[derive(Debug, Clone)]
pub struct ForwardStepRecord {
    /// `(mean, covariance)` of `x_k` given measurements up to `k-1`.
    pub predicted: GaussianBelief,
    /// `(mean, covariance)` of `x_k` given measurements up to `k`.
    pub filtered: GaussianBelief,
    /// `Cov(x_{k-1}, x_k)`, produced by the prediction from step `k-1`.
    pub cross_timestep: DMatrix<f64>,
    /// Kalman gain `K_k`.
    pub gain: DMatrix<f64>,
    /// Measurement residual `y_k - E[h(x_k)]`.
    pub innovation: DVector<f64>,
}

/// Wall-clock split of one smoothing run.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub forward: Duration,
    pub backward: Duration,
}

/// Output of [`smooth`]: forward records plus the backward-pass beliefs and
/// gains, with per-phase timings for relative-execution-time reporting.
#[derive(Debug, Clone)]
pub struct SmoothingResult {
    pub forward: Vec<ForwardStepRecord>,
    /// Smoothed beliefs for `k = 1 ..= T`; entry `T` equals the filtered
    /// belief exactly.
    pub smoothed: Vec<GaussianBelief>,
    /// Smoother gains `G_k` for `k = 1 .. T`; `None` at the final step.
    pub gains: Vec<Option<DMatrix<f64>>>,
    pub timings: PhaseTimings,
}

impl SmoothingResult {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

fn step_failure(step: usize) -> impl FnOnce(Error) -> Error {
    move |source| Error::NumericalFailure {
        step,
        reason: source.to_string(),
    }
}

/// Runs the forward Gaussian filter over `measurements[0..T]`, which are the
/// observations `y_1 ..= y_T`.
pub fn forward_filter(
    model: &StateSpaceModel,
    measurements: &[DVector<f64>],
    init: &GaussianBelief,
    strategy: &dyn MomentStrategy,
) -> Result<Vec<ForwardStepRecord>> {
    let n = model.state_dim();
    let m = model.measurement_dim();
    if init.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.dim(),
        });
    }
    if measurements.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one measurement".into(),
        ));
    }

    let mut records = Vec::with_capacity(measurements.len());
    let mut belief = init.clone();
    for (index, y) in measurements.iter().enumerate() {
        let k = index + 1;
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: y.len(),
            });
        }

        let dynamics = model.dynamics_at(k);
        let predicted_moments = strategy
            .predict(&dynamics, model.process_noise(), &belief)
            .map_err(step_failure(k))?;
        let predicted = GaussianBelief::from_projected(
            predicted_moments.mean.clone(),
            &predicted_moments.covariance,
        );

        let measurement_moments = strategy
            .measurement(
                model.measurement_map(),
                model.measurement_noise(),
                &predicted,
            )
            .map_err(step_failure(k))?;

        // K = P_xy P_yy^{-1}, via an SPD solve on the innovation covariance.
        let gain = solve_spd(
            &measurement_moments.covariance,
            &measurement_moments.cross.transpose(),
        )
        .map_err(step_failure(k))?
        .transpose();

        let innovation = y - &measurement_moments.mean;
        let filtered_mean = predicted.mean() + &gain * &innovation;
        let filtered_cov =
            predicted.covariance() - &gain * &measurement_moments.covariance * gain.transpose();
        let filtered = GaussianBelief::from_projected(filtered_mean, &filtered_cov);

        records.push(ForwardStepRecord {
            predicted,
            filtered: filtered.clone(),
            cross_timestep: predicted_moments.cross,
            gain,
            innovation,
        });
        belief = filtered;
    }
    Ok(records)
}

/// Smoothed beliefs paired with the backward gains (`None` at the final step).
pub type BackwardPass = (Vec<GaussianBelief>, Vec<Option<DMatrix<f64>>>);

/// Backward RTS recursion over stored forward records. Strategy-agnostic.
pub fn rts_backward(records: &[ForwardStepRecord]) -> Result<BackwardPass> {
    let steps = records.len();
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "backward pass needs at least one forward record".into(),
        ));
    }
    let mut smoothed = vec![records[steps - 1].filtered.clone(); steps];
    let mut gains: Vec<Option<DMatrix<f64>>> = vec![None; steps];

    for k in (0..steps - 1).rev() {
        let next = &records[k + 1];
        // G_k = Cov(x_k, x_{k+1}) * P_{k+1|k}^{-1}
        let gain = solve_spd(
            next.predicted.covariance(),
            &next.cross_timestep.transpose(),
        )
        .map_err(step_failure(k + 2))?
        .transpose();

        let mean =
            records[k].filtered.mean() + &gain * (smoothed[k + 1].mean() - next.predicted.mean());
        let covariance = records[k].filtered.covariance()
            + &gain
                * (smoothed[k + 1].covariance() - next.predicted.covariance())
                * gain.transpose();
        smoothed[k] = GaussianBelief::from_projected(mean, &covariance);
        gains[k] = Some(gain);
    }
    Ok((smoothed, gains))
}

/// Forward filter followed by the backward pass, with per-phase wall timing.
pub fn smooth(
    model: &StateSpaceModel,
    measurements: &[DVector<f64>],
    init: &GaussianBelief,
    strategy: &dyn MomentStrategy,
) -> Result<SmoothingResult> {
    let started = Instant::now();
    let forward = forward_filter(model, measurements, init, strategy)?;
    let forward_elapsed = started.elapsed();

    let started = Instant::now();
    let (smoothed, gains) = rts_backward(&forward)?;
    let backward_elapsed = started.elapsed();

    Ok(SmoothingResult {
        forward,
        smoothed,
        gains,
        timings: PhaseTimings {
            forward: forward_elapsed,
            backward: backward_elapsed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{linear_model, simulate, vdp_model};
    use crate::strategies::{strategy_by_name, GaussianIntegralStrategy};

    fn scalar_model(q: f64, r: f64) -> StateSpaceModel {
        let f = DMatrix::from_row_slice(1, 1, &[1.0]);
        let h = DMatrix::from_row_slice(1, 1, &[1.0]);
        linear_model(
            &f,
            &h,
            DMatrix::from_row_slice(1, 1, &[q]),
            DMatrix::from_row_slice(1, 1, &[r]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_kalman_single_update() {
        // Prior N(0, 1), identity dynamics with Q = 0, R = 1: one update
        // gives P = 0.5 and mean y/2.
        let model = scalar_model(0.0, 1.0);
        let init = GaussianBelief::new(
            DVector::from_vec(vec![0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let y = 0.8;
        let records = forward_filter(
            &model,
            &[DVector::from_vec(vec![y])],
            &init,
            &GaussianIntegralStrategy,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        let filtered = &records[0].filtered;
        assert!((filtered.covariance()[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((filtered.mean()[0] - y / 2.0).abs() < 1e-14);
    }

    #[test]
    fn near_degenerate_exact_measurements_track_constant_truth() {
        // Identity dynamics, Q = 0, R ~ 0: the filter must lock onto the
        // constant true state after the first update.
        let model = scalar_model(0.0, 1e-12);
        let init = GaussianBelief::new(
            DVector::from_vec(vec![5.0]),
            DMatrix::from_row_slice(1, 1, &[4.0]),
        )
        .unwrap();
        let truth = -1.25;
        let ys: Vec<DVector<f64>> = (0..20).map(|_| DVector::from_vec(vec![truth])).collect();
        let records = forward_filter(&model, &ys, &init, &GaussianIntegralStrategy).unwrap();
        for record in &records[1..] {
            assert!((record.filtered.mean()[0] - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn single_step_smoothing_equals_filtering() {
        let model = scalar_model(0.1, 1.0);
        let init = GaussianBelief::new(
            DVector::from_vec(vec![0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let result = smooth(
            &model,
            &[DVector::from_vec(vec![0.3])],
            &init,
            &GaussianIntegralStrategy,
        )
        .unwrap();
        assert_eq!(result.len(), 1);
        assert_eq!(result.smoothed[0].mean(), result.forward[0].filtered.mean());
        assert_eq!(
            result.smoothed[0].covariance(),
            result.forward[0].filtered.covariance()
        );
        assert!(result.gains[0].is_none());
    }

    #[test]
    fn final_step_smoothed_equals_filtered_bitwise() {
        let model = vdp_benchmark_model();
        let x0 = DVector::from_vec(vec![2.75, 0.0, 2.0]);
        let traj = simulate(&model, &x0, 40, 5).unwrap();
        let init = benchmark_init();
        for name in ["gi", "ckf", "ukf", "ekf"] {
            let strategy = strategy_by_name(name).unwrap();
            let result = smooth(&model, traj.measurements(), &init, strategy.as_ref()).unwrap();
            let last = result.len() - 1;
            assert_eq!(
                result.smoothed[last].mean(),
                result.forward[last].filtered.mean(),
                "{name}"
            );
            assert_eq!(
                result.smoothed[last].covariance(),
                result.forward[last].filtered.covariance(),
                "{name}"
            );
        }
    }

    fn vdp_benchmark_model() -> StateSpaceModel {
        vdp_model(
            100.0,
            1.85 * std::f64::consts::PI / 2.0,
            0.01,
            DMatrix::identity(3, 3) * 1e-3,
            DMatrix::identity(2, 2) * 1e-1,
        )
        .unwrap()
    }

    fn benchmark_init() -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_vec(vec![0.0, -3.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 10.0, 0.5])),
        )
        .unwrap()
    }

    #[test]
    fn update_never_increases_covariance_trace() {
        let model = vdp_benchmark_model();
        let x0 = DVector::from_vec(vec![2.75, 0.0, 2.0]);
        let traj = simulate(&model, &x0, 100, 11).unwrap();
        let init = benchmark_init();
        for name in ["gi", "ckf", "ukf", "ekf"] {
            let strategy = strategy_by_name(name).unwrap();
            let records =
                forward_filter(&model, traj.measurements(), &init, strategy.as_ref()).unwrap();
            for (k, record) in records.iter().enumerate() {
                let predicted: f64 = record.predicted.covariance().trace();
                let filtered: f64 = record.filtered.covariance().trace();
                assert!(
                    filtered <= predicted + 1e-12,
                    "{name} step {}: trace grew {filtered} > {predicted}",
                    k + 1
                );
            }
        }
    }

    #[test]
    fn emitted_covariances_are_symmetric_psd() {
        let model = vdp_benchmark_model();
        let x0 = DVector::from_vec(vec![2.75, 0.0, 2.0]);
        let traj = simulate(&model, &x0, 60, 17).unwrap();
        let init = benchmark_init();
        let result = smooth(
            &model,
            traj.measurements(),
            &init,
            &GaussianIntegralStrategy,
        )
        .unwrap();
        let mut all = Vec::new();
        for record in &result.forward {
            all.push(record.predicted.covariance().clone());
            all.push(record.filtered.covariance().clone());
        }
        for belief in &result.smoothed {
            all.push(belief.covariance().clone());
        }
        for cov in all {
            assert!((&cov - cov.transpose()).amax() < 1e-12);
            let min = cov.symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-10, "eigenvalue {min}");
        }
    }

    #[test]
    fn smoothing_reduces_error_against_truth() {
        let model = vdp_benchmark_model();
        let x0 = DVector::from_vec(vec![2.75, 0.0, 2.0]);
        let init = benchmark_init();
        let mut filtered_sq = 0.0;
        let mut smoothed_sq = 0.0;
        for seed in 0..10 {
            let traj = simulate(&model, &x0, 80, seed).unwrap();
            let result = smooth(
                &model,
                traj.measurements(),
                &init,
                &GaussianIntegralStrategy,
            )
            .unwrap();
            for k in 0..traj.len() {
                let truth = &traj.states()[k];
                filtered_sq += (result.forward[k].filtered.mean() - truth).norm_squared();
                smoothed_sq += (result.smoothed[k].mean() - truth).norm_squared();
            }
        }
        assert!(
            smoothed_sq < filtered_sq,
            "smoothed {smoothed_sq} vs filtered {filtered_sq}"
        );
    }

    #[test]
    fn backward_pass_rejects_empty_input() {
        assert!(rts_backward(&[]).is_err());
    }

    #[test]
    fn failure_carries_the_step_index() {
        // A model whose dynamics explode produces a non-PD innovation
        // covariance once the covariance overflows to infinity.
        let f = DMatrix::from_row_slice(1, 1, &[1e200]);
        let h = DMatrix::from_row_slice(1, 1, &[1.0]);
        let model = linear_model(
            &f,
            &h,
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let init = GaussianBelief::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let ys: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_vec(vec![0.0])).collect();
        let err = forward_filter(&model, &ys, &init, &GaussianIntegralStrategy).unwrap_err();
        match err {
            Error::NumericalFailure { step, .. } => assert!(step >= 1),
            other => panic!("expected NumericalFailure, got {other:?}"),
        }
    }
}
