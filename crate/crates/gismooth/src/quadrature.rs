//! Tensor Gauss–Hermite quadrature, used as an independent numerical oracle
//! for the closed-form moment computation.
//!
//! The rule integrates against `exp(-x^2)`; expectations under `N(mean, P)`
//! substitute `x = mean + sqrt(2) * L * xi` with `L` the Cholesky factor of
//! `P`. Cholesky is chosen deliberately: the closed-form path factorizes by
//! eigen-decomposition, so the two routes share no factorization code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::GaussianBelief;
use crate::polynomial::{Monomial, Polynomial};
use crate::rng;

/// Nodes and weights of the n-point Gauss–Hermite rule (weight `exp(-x^2)`).
///
/// Computed by the Golub–Welsch algorithm: the rule's nodes are the
/// eigenvalues of the symmetric tridiagonal Jacobi matrix with zero diagonal
/// and `sqrt(k/2)` off-diagonal, and the weights are `sqrt(pi)` times the
/// squared first components of the corresponding eigenvectors.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one node".into(),
            ));
        }
        let mut jacobi = DMatrix::zeros(points, points);
        for k in 1..points {
            let value = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = value;
            jacobi[(k, k - 1)] = value;
        }
        let eigen = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &node)| {
                let first = eigen.eigenvectors[(0, j)];
                (node, first * first * std::f64::consts::PI.sqrt())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `E[p(x)]` under the belief, by a full tensor grid with `nodes_per_dim`
/// points per dimension. Exact for polynomials of degree `< 2 * nodes_per_dim`
/// per variable; requires a positive-definite covariance.
pub fn expectation(p: &Polynomial, belief: &GaussianBelief, nodes_per_dim: usize) -> Result<f64> {
    let n = belief.dim();
    if p.arity() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.arity(),
        });
    }
    let rule = GaussHermite::new(nodes_per_dim)?;
    let chol = belief.covariance().clone().cholesky().ok_or_else(|| {
        Error::NotSpd("quadrature requires a positive-definite covariance".into())
    })?;
    let factor = chol.l() * std::f64::consts::SQRT_2;

    let mut index = vec![0usize; n];
    let mut point = vec![0.0f64; n];
    let mut acc = 0.0;
    loop {
        let mut weight = 1.0;
        for &i in &index {
            weight *= rule.weights[i];
        }
        for (d, x) in point.iter_mut().enumerate() {
            *x = belief.mean()[d];
            for (e, &i) in index.iter().enumerate() {
                *x += factor[(d, e)] * rule.nodes[i];
            }
        }
        acc += weight * p.evaluate(&point)?;

        // Odometer over the tensor grid.
        let mut dim = 0;
        loop {
            if dim == n {
                return Ok(acc / std::f64::consts::PI.powf(n as f64 / 2.0));
            }
            index[dim] += 1;
            if index[dim] < rule.len() {
                break;
            }
            index[dim] = 0;
            dim += 1;
        }
    }
}

/// Outcome of a randomized closed-form-vs-quadrature comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub cases: usize,
    pub max_relative_error: f64,
}

/// Runs `cases` random polynomials (total degree <= `max_degree`) against
/// random beliefs with covariance condition number <= 1e4, comparing the
/// closed-form expectation to 12-node-per-dimension tensor quadrature.
/// Errors are relative with an absolute floor of one.
pub fn run_oracle_suite(
    dim: usize,
    max_degree: u32,
    cases: usize,
    seed: u64,
) -> Result<OracleReport> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if max_degree > 11 {
        return Err(Error::InvalidParameter(
            "12-node quadrature is exact only up to degree 11 per variable".into(),
        ));
    }
    let mut max_rel = 0.0f64;
    for case in 0..cases {
        let mut rng = rng::keyed_rng(&[seed, case as u64, dim as u64]);
        let belief = random_belief(dim, &mut rng);
        let poly = random_polynomial(dim, max_degree, &mut rng);
        let exact = crate::moments::polynomial_expectation(&poly, &belief)?;
        let reference = expectation(&poly, &belief, 12)?;
        let rel = (exact - reference).abs() / reference.abs().max(1.0);
        max_rel = max_rel.max(rel);
    }
    Ok(OracleReport {
        cases,
        max_relative_error: max_rel,
    })
}

/// Random belief with eigenvalues log-uniform in [1e-2, 1e2], so the
/// condition number never exceeds 1e4.
pub(crate) fn random_belief(dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> GaussianBelief {
    let mut raw = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            raw[(i, j)] = rng::uniform(rng, -1.0, 1.0);
        }
        // Guard against a (measure-zero) rank-deficient draw.
        raw[(i, i)] += 2.0;
    }
    let q = raw.qr().q();
    let mut cov = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let eig = 10f64.powf(rng::uniform(rng, -2.0, 2.0));
        let col = q.column(j).into_owned();
        cov += eig * &col * col.transpose();
    }
    let mean = DVector::from_iterator(dim, (0..dim).map(|_| rng::uniform(rng, -2.0, 2.0)));
    GaussianBelief::new(mean, cov).expect("constructed covariance is SPD")
}

pub(crate) fn random_polynomial(
    dim: usize,
    max_degree: u32,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Polynomial {
    let term_count = 1 + rng::uniform_usize(rng, 6);
    let mut monomials = Vec::with_capacity(term_count);
    for _ in 0..term_count {
        let exponents = loop {
            let candidate: Vec<u32> = (0..dim)
                .map(|_| rng::uniform_usize(rng, max_degree as usize + 1) as u32)
                .collect();
            if candidate.iter().sum::<u32>() <= max_degree {
                break candidate;
            }
        };
        monomials.push(Monomial::new(rng::uniform(rng, -2.0, 2.0), exponents));
    }
    Polynomial::from_terms(dim, monomials).expect("matching arity by construction")
}
