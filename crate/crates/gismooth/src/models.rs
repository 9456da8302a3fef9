//! State-space model definitions and truth simulation.
//!
//! A model is a pair of polynomial maps (dynamics, measurement) plus noise
//! covariances. Dynamics are time-indexed to accommodate forcing terms that
//! enter as degree-0 monomials rebuilt per time step; the polynomial algebra
//! itself stays time-agnostic. Simulation evaluates the same polynomial maps
//! the filters see, so model mismatch cannot confound the benchmark, and all
//! noise is drawn from a counter-based generator keyed by
//! `(seed, step, purpose)` so trajectories are reproducible independent of
//! scheduling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_decompose, PSD_TOL};
use crate::polynomial::{Monomial, Polynomial, PolynomialMap};
use crate::rng;

#[derive(Debug, Clone)]
enum Dynamics {
    /// The same map at every step.
    Static(PolynomialMap),
    /// A static base plus a sinusoidal forcing constant added to one
    /// component: `amplitude * cos(frequency * (k-1) * delta) * delta`,
    /// evaluated at the source step index of the transition producing `x_k`.
    Forced {
        base: PolynomialMap,
        component: usize,
        amplitude: f64,
        frequency: f64,
        delta: f64,
    },
}

/// Discrete-time stochastic state-space model
/// `x_k = f_k(x_{k-1}) + w`, `y_k = h(x_k) + v`.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    dynamics: Dynamics,
    measurement: PolynomialMap,
    process_noise: DMatrix<f64>,
    measurement_noise: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Model with time-invariant polynomial dynamics.
    pub fn new(
        dynamics: PolynomialMap,
        measurement: PolynomialMap,
        process_noise: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let model = Self {
            dynamics: Dynamics::Static(dynamics),
            measurement,
            process_noise,
            measurement_noise,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let f = self.dynamics_at(1);
        if f.arity() != n || f.output_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.arity().max(f.output_dim()),
            });
        }
        if self.measurement.arity() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.measurement.arity(),
            });
        }
        let m = self.measurement.output_dim();
        check_psd("process noise", &self.process_noise, n)?;
        check_psd("measurement noise", &self.measurement_noise, m)?;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.process_noise.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement.output_dim()
    }

    /// The transition map producing `x_k` from `x_{k-1}`, for `k >= 1`.
    pub fn dynamics_at(&self, k: usize) -> PolynomialMap {
        match &self.dynamics {
            Dynamics::Static(map) => map.clone(),
            Dynamics::Forced {
                base,
                component,
                amplitude,
                frequency,
                delta,
            } => {
                let phase = frequency * (k as f64 - 1.0) * delta;
                let constant = amplitude * phase.cos() * delta;
                let arity = base.arity();
                let components = base
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == *component {
                            c.add(&Polynomial::constant(arity, constant))
                                .expect("matching arity")
                        } else {
                            c.clone()
                        }
                    })
                    .collect();
                PolynomialMap::new(components).expect("base map is well formed")
            }
        }
    }

    pub fn measurement_map(&self) -> &PolynomialMap {
        &self.measurement
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    pub fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.measurement_noise
    }
}

fn check_psd(what: &str, m: &DMatrix<f64>, expected_dim: usize) -> Result<()> {
    if m.nrows() != expected_dim || m.ncols() != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            got: m.nrows(),
        });
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidMatrix(format!(
            "{what} has non-finite entries"
        )));
    }
    let drift = (m - m.transpose()).amax();
    if drift > 1e-9 * (1.0 + m.amax()) {
        return Err(Error::InvalidMatrix(format!("{what} is not symmetric")));
    }
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    if min < -PSD_TOL {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// The forced Van der Pol oscillator discretized with sampling interval
/// `delta`:
///
/// ```text
/// f(x) = [ x1 + x2 d,
///          x2 + (x3 (1 - x1^2) x2 - x1 + A cos(lambda k d)) d,
///          x3 ]
/// h(x) = [ x1, x2 ]
/// ```
///
/// State 3 is the (constant) damping coefficient; the degree-4 term
/// `-d x1^2 x2 x3` is what separates the exact moment rule from the
/// approximate ones.
pub fn vdp_model(
    amplitude: f64,
    frequency: f64,
    delta: f64,
    process_noise: DMatrix<f64>,
    measurement_noise: DMatrix<f64>,
) -> Result<StateSpaceModel> {
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sampling interval must be positive, got {delta}"
        )));
    }
    let f1 = Polynomial::from_terms(
        3,
        [
            Monomial::new(1.0, vec![1, 0, 0]),
            Monomial::new(delta, vec![0, 1, 0]),
        ],
    )?;
    let f2 = Polynomial::from_terms(
        3,
        [
            Monomial::new(1.0, vec![0, 1, 0]),
            Monomial::new(delta, vec![0, 1, 1]),
            Monomial::new(-delta, vec![2, 1, 1]),
            Monomial::new(-delta, vec![1, 0, 0]),
        ],
    )?;
    let f3 = Polynomial::coordinate(3, 2)?;
    let base = PolynomialMap::new(vec![f1, f2, f3])?;
    let measurement = PolynomialMap::new(vec![
        Polynomial::coordinate(3, 0)?,
        Polynomial::coordinate(3, 1)?,
    ])?;

    let model = StateSpaceModel {
        dynamics: Dynamics::Forced {
            base,
            component: 1,
            amplitude,
            frequency,
            delta,
        },
        measurement,
        process_noise,
        measurement_noise,
    };
    model.validate()?;
    Ok(model)
}

/// Linear-Gaussian model `x_k = F x_{k-1} + w`, `y_k = H x_k + v`, wrapped as
/// degree-1 polynomial maps.
pub fn linear_model(
    transition: &DMatrix<f64>,
    observation: &DMatrix<f64>,
    process_noise: DMatrix<f64>,
    measurement_noise: DMatrix<f64>,
) -> Result<StateSpaceModel> {
    if transition.nrows() != transition.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "transition matrix must be square, got {}x{}",
            transition.nrows(),
            transition.ncols()
        )));
    }
    if observation.ncols() != transition.ncols() {
        return Err(Error::DimensionMismatch {
            expected: transition.ncols(),
            got: observation.ncols(),
        });
    }
    StateSpaceModel::new(
        PolynomialMap::from_affine(transition, None)?,
        PolynomialMap::from_affine(observation, None)?,
        process_noise,
        measurement_noise,
    )
}

/// True states and measurements generated by a model; reproducible from
/// `(model, x0, seed)`.
#[derive(Debug, Clone)]
pub struct SimulatedTrajectory {
    states: Vec<DVector<f64>>,
    measurements: Vec<DVector<f64>>,
    seed: u64,
}

impl SimulatedTrajectory {
    /// True states `x_1 ..= x_T`.
    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    /// Measurements `y_1 ..= y_T`.
    pub fn measurements(&self) -> &[DVector<f64>] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

const PURPOSE_PROCESS: u64 = 0;
const PURPOSE_MEASUREMENT: u64 = 1;

/// Simulates `x_k = f_k(x_{k-1}) + w_k`, `y_k = h(x_k) + v_k` for
/// `k = 1 ..= steps` starting from the given `x0` (the state at index 0).
pub fn simulate(
    model: &StateSpaceModel,
    x0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<SimulatedTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let m = model.measurement_dim();
    let process_factor = spectral_decompose(model.process_noise())?.sqrt_factor();
    let measurement_factor = spectral_decompose(model.measurement_noise())?.sqrt_factor();

    let mut states = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    let mut current = x0.clone();
    let mut draw = vec![0.0f64; n.max(m)];
    for k in 1..=steps {
        let dynamics = model.dynamics_at(k);
        let mut next = dynamics.evaluate(current.as_slice())?;
        let mut rng = rng::keyed_rng(&[seed, k as u64, PURPOSE_PROCESS]);
        rng::fill_standard_normal(&mut rng, &mut draw[..n]);
        next += &process_factor * DVector::from_row_slice(&draw[..n]);

        let mut measurement = model.measurement_map().evaluate(next.as_slice())?;
        let mut rng = rng::keyed_rng(&[seed, k as u64, PURPOSE_MEASUREMENT]);
        rng::fill_standard_normal(&mut rng, &mut draw[..m]);
        measurement += &measurement_factor * DVector::from_row_slice(&draw[..m]);

        states.push(next.clone());
        measurements.push(measurement);
        current = next;
    }
    Ok(SimulatedTrajectory {
        states,
        measurements,
        seed,
    })
}
