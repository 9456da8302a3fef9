//! Interchangeable moment rules for Gaussian filtering and smoothing.
//!
//! Every Gaussian filter needs the same three bundles per step: predicted
//! moments (mean, covariance, and the cross-timestep covariance that the
//! backward pass consumes), and measurement moments (predicted measurement,
//! innovation covariance, state-measurement cross covariance). The four
//! implementations are
//!
//! - `gi`  — exact closed-form polynomial moments,
//! - `ckf` — 3rd-degree spherical-radial (cubature) rule, 2n points,
//! - `ukf` — unscented transform in the kappa-only formulation, 2n+1 points,
//! - `ekf` — first-order linearization with exact polynomial Jacobians.
//!
//! The cross-timestep covariance is produced inside predict rather than by a
//! separate backward-pass call: it depends only on the filtered belief the
//! prediction starts from, so computing it here halves the moment work.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, symmetrize_and_project, GaussianBelief};
use crate::moments::MomentContext;
use crate::polynomial::PolynomialMap;

/// Names accepted by [`strategy_by_name`], in the conventional sweep order.
pub const STRATEGY_NAMES: [&str; 4] = ["gi", "ckf", "ukf", "ekf"];

/// Moments of the predicted state distribution.
#[derive(Debug, Clone)]
pub struct PredictedMoments {
    /// `E[f(x)]`.
    pub mean: DVector<f64>,
    /// `Cov[f(x)] + Q`, PSD-projected.
    pub covariance: DMatrix<f64>,
    /// `Cov(x, f(x))`, the cross-timestep covariance.
    pub cross: DMatrix<f64>,
}

/// Moments of the predicted measurement distribution.
#[derive(Debug, Clone)]
pub struct MeasurementMoments {
    /// `E[h(x)]`.
    pub mean: DVector<f64>,
    /// Innovation covariance `Cov[h(x)] + R`, PSD-projected.
    pub covariance: DMatrix<f64>,
    /// `Cov(x, h(x))`.
    pub cross: DMatrix<f64>,
}

/// Deterministic sample set matching a belief's first two moments.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub covariance_weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted sample mean of the raw points.
    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.points[0].len());
        for (point, &w) in self.points.iter().zip(&self.mean_weights) {
            mean += point * w;
        }
        mean
    }
}

/// Exact moments of the predicted state via the closed-form polynomial rule.
pub fn gi_predict(
    f: &PolynomialMap,
    process_noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<PredictedMoments> {
    let (mean, covariance, cross) = gi_transform(f, process_noise, belief)?;
    Ok(PredictedMoments {
        mean,
        covariance,
        cross,
    })
}

/// Exact measurement moments via the closed-form polynomial rule.
pub fn gi_measurement(
    h: &PolynomialMap,
    measurement_noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<MeasurementMoments> {
    let (mean, covariance, cross) = gi_transform(h, measurement_noise, belief)?;
    Ok(MeasurementMoments {
        mean,
        covariance,
        cross,
    })
}

fn gi_transform(
    map: &PolynomialMap,
    noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_noise_dims(map, noise)?;
    let ctx = MomentContext::new(belief)?;
    let mean = ctx.map_expectation(map)?;
    let second = ctx.second_moment_matrix(map)?;
    let covariance = symmetrize_and_project(&(second - &mean * mean.transpose() + noise));
    let cross = ctx.cross_moment_matrix(map)? - belief.mean() * mean.transpose();
    Ok((mean, covariance, cross))
}

/// 2n cubature points `mean +- sqrt(n) * col_i(sqrt(P))` with equal weights.
pub fn sigma_points_cubature(belief: &GaussianBelief) -> Result<SigmaPointSet> {
    let n = belief.dim();
    let sqrt_p = spectral_decompose(belief.covariance())?.sqrt_factor();
    let scale = (n as f64).sqrt();
    let mut points = Vec::with_capacity(2 * n);
    for i in 0..n {
        let offset = sqrt_p.column(i) * scale;
        points.push(belief.mean() + &offset);
        points.push(belief.mean() - &offset);
    }
    let weight = 1.0 / (2.0 * n as f64);
    Ok(SigmaPointSet {
        points,
        mean_weights: vec![weight; 2 * n],
        covariance_weights: vec![weight; 2 * n],
    })
}

/// 2n+1 unscented points: the mean with weight `kappa/(n+kappa)` plus
/// `mean +- sqrt(n+kappa) * col_i(sqrt(P))` with weights `1/(2(n+kappa))`.
pub fn sigma_points_unscented(belief: &GaussianBelief, kappa: f64) -> Result<SigmaPointSet> {
    let n = belief.dim();
    let spread = n as f64 + kappa;
    if spread <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "unscented transform requires n + kappa > 0, got {spread}"
        )));
    }
    let sqrt_p = spectral_decompose(belief.covariance())?.sqrt_factor();
    let scale = spread.sqrt();
    let mut points = Vec::with_capacity(2 * n + 1);
    let mut weights = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean().clone());
    weights.push(kappa / spread);
    let outer_weight = 1.0 / (2.0 * spread);
    for i in 0..n {
        let offset = sqrt_p.column(i) * scale;
        points.push(belief.mean() + &offset);
        points.push(belief.mean() - &offset);
        weights.push(outer_weight);
        weights.push(outer_weight);
    }
    Ok(SigmaPointSet {
        points,
        mean_weights: weights.clone(),
        covariance_weights: weights,
    })
}

/// Weighted-sample predicted moments from propagated sigma points.
pub fn sigma_predict(
    points: &SigmaPointSet,
    f: &PolynomialMap,
    process_noise: &DMatrix<f64>,
) -> Result<PredictedMoments> {
    let (mean, covariance, cross) = sigma_transform(points, f, process_noise)?;
    Ok(PredictedMoments {
        mean,
        covariance,
        cross,
    })
}

/// Weighted-sample measurement moments from propagated sigma points.
pub fn sigma_measurement(
    points: &SigmaPointSet,
    h: &PolynomialMap,
    measurement_noise: &DMatrix<f64>,
) -> Result<MeasurementMoments> {
    let (mean, covariance, cross) = sigma_transform(points, h, measurement_noise)?;
    Ok(MeasurementMoments {
        mean,
        covariance,
        cross,
    })
}

fn sigma_transform(
    points: &SigmaPointSet,
    map: &PolynomialMap,
    noise: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_noise_dims(map, noise)?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty sigma point set".into()));
    }
    let propagated: Vec<DVector<f64>> = points
        .points
        .iter()
        .map(|x| map.evaluate(x.as_slice()))
        .collect::<Result<_>>()?;

    let out_dim = map.output_dim();
    let mut mean = DVector::zeros(out_dim);
    for (y, &w) in propagated.iter().zip(&points.mean_weights) {
        mean += y * w;
    }

    let input_mean = points.mean();
    let mut covariance = noise.clone();
    let mut cross = DMatrix::zeros(map.arity(), out_dim);
    for ((x, y), &w) in points
        .points
        .iter()
        .zip(&propagated)
        .zip(&points.covariance_weights)
    {
        let dy = y - &mean;
        covariance += w * &dy * dy.transpose();
        cross += w * (x - &input_mean) * dy.transpose();
    }
    Ok((mean, symmetrize_and_project(&covariance), cross))
}

/// First-order moments: propagate the mean through the map and the covariance
/// through its Jacobian at the mean.
pub fn linearized_predict(
    f: &PolynomialMap,
    process_noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<PredictedMoments> {
    let (mean, covariance, cross) = linearized_transform(f, process_noise, belief)?;
    Ok(PredictedMoments {
        mean,
        covariance,
        cross,
    })
}

/// First-order measurement moments.
pub fn linearized_measurement(
    h: &PolynomialMap,
    measurement_noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<MeasurementMoments> {
    let (mean, covariance, cross) = linearized_transform(h, measurement_noise, belief)?;
    Ok(MeasurementMoments {
        mean,
        covariance,
        cross,
    })
}

/// Exact Jacobian of a polynomial map at a point.
pub fn jacobian_at(map: &PolynomialMap, x: &[f64]) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(map.output_dim(), map.arity());
    for (i, component) in map.components().iter().enumerate() {
        for j in 0..map.arity() {
            jac[(i, j)] = component.differentiate(j)?.evaluate(x)?;
        }
    }
    Ok(jac)
}

fn linearized_transform(
    map: &PolynomialMap,
    noise: &DMatrix<f64>,
    belief: &GaussianBelief,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_noise_dims(map, noise)?;
    if map.arity() != belief.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            got: map.arity(),
        });
    }
    let mean = map.evaluate(belief.mean().as_slice())?;
    let jac = jacobian_at(map, belief.mean().as_slice())?;
    let covariance =
        symmetrize_and_project(&(&jac * belief.covariance() * jac.transpose() + noise));
    let cross = belief.covariance() * jac.transpose();
    Ok((mean, covariance, cross))
}

fn check_noise_dims(map: &PolynomialMap, noise: &DMatrix<f64>) -> Result<()> {
    if noise.nrows() != map.output_dim() || noise.ncols() != map.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.output_dim(),
            got: noise.nrows(),
        });
    }
    Ok(())
}

/// A moment rule usable by the filter/smoother, selected by name.
pub trait MomentStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn predict(
        &self,
        f: &PolynomialMap,
        process_noise: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<PredictedMoments>;

    fn measurement(
        &self,
        h: &PolynomialMap,
        measurement_noise: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<MeasurementMoments>;
}

/// Exact Gaussian-integral moments.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianIntegralStrategy;

impl MomentStrategy for GaussianIntegralStrategy {
    fn name(&self) -> &'static str {
        "gi"
    }

    fn predict(
        &self,
        f: &PolynomialMap,
        q: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<PredictedMoments> {
        gi_predict(f, q, belief)
    }

    fn measurement(
        &self,
        h: &PolynomialMap,
        r: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<MeasurementMoments> {
        gi_measurement(h, r, belief)
    }
}

/// 3rd-degree spherical-radial cubature rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubatureStrategy;

impl MomentStrategy for CubatureStrategy {
    fn name(&self) -> &'static str {
        "ckf"
    }

    fn predict(
        &self,
        f: &PolynomialMap,
        q: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<PredictedMoments> {
        sigma_predict(&sigma_points_cubature(belief)?, f, q)
    }

    fn measurement(
        &self,
        h: &PolynomialMap,
        r: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<MeasurementMoments> {
        sigma_measurement(&sigma_points_cubature(belief)?, h, r)
    }
}

/// Kappa-only unscented transform.
#[derive(Debug, Clone, Copy)]
pub struct UnscentedStrategy {
    pub kappa: f64,
}

impl UnscentedStrategy {
    pub fn new(kappa: f64) -> Self {
        Self { kappa }
    }
}

impl Default for UnscentedStrategy {
    /// The benchmark setting `kappa = -1`.
    fn default() -> Self {
        Self { kappa: -1.0 }
    }
}

impl MomentStrategy for UnscentedStrategy {
    fn name(&self) -> &'static str {
        "ukf"
    }

    fn predict(
        &self,
        f: &PolynomialMap,
        q: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<PredictedMoments> {
        sigma_predict(&sigma_points_unscented(belief, self.kappa)?, f, q)
    }

    fn measurement(
        &self,
        h: &PolynomialMap,
        r: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<MeasurementMoments> {
        sigma_measurement(&sigma_points_unscented(belief, self.kappa)?, h, r)
    }
}

/// First-order Taylor (extended Kalman) moments.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearizedStrategy;

impl MomentStrategy for LinearizedStrategy {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn predict(
        &self,
        f: &PolynomialMap,
        q: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<PredictedMoments> {
        linearized_predict(f, q, belief)
    }

    fn measurement(
        &self,
        h: &PolynomialMap,
        r: &DMatrix<f64>,
        belief: &GaussianBelief,
    ) -> Result<MeasurementMoments> {
        linearized_measurement(h, r, belief)
    }
}

/// Single dispatch point for the configured strategy vocabulary.
pub fn strategy_by_name(name: &str) -> Result<Box<dyn MomentStrategy>> {
    match name {
        "gi" => Ok(Box::new(GaussianIntegralStrategy)),
        "ckf" => Ok(Box::new(CubatureStrategy)),
        "ukf" => Ok(Box::new(UnscentedStrategy::default())),
        "ekf" => Ok(Box::new(LinearizedStrategy)),
        other => Err(Error::InvalidParameter(format!(
            "unknown strategy \"{other}\" (expected one of {STRATEGY_NAMES:?})"
        ))),
    }
}
