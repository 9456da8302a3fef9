//! Dense symmetric linear algebra and Gaussian-belief primitives.
//!
//! Every covariance in the crate flows through this module: the spectral
//! decomposition is the canonical factorization (the moment expansion consumes
//! eigenvalues and an orthogonal basis directly, and sigma-point square roots
//! reuse the same factors), Cholesky backs the SPD solves, and
//! [`symmetrize_and_project`] is the numerical hygiene applied after every
//! covariance update.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetry tolerance for matrices accepted as symmetric input.
pub const SYM_TOL: f64 = 1e-9;
/// Eigenvalues above `-PSD_TOL` are treated as round-off and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
/// Reconstruction tolerance guaranteed by [`spectral_decompose`].
pub const RECON_TOL: f64 = 1e-10;

/// Mean and covariance of a Gaussian state estimate.
///
/// The covariance is symmetrized on construction and must be positive
/// semi-definite up to round-off (eigenvalues >= `-PSD_TOL`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    /// Validating constructor: symmetrizes the covariance and rejects
    /// non-square shapes, dimension mismatches and indefinite matrices.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "covariance must be square, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        if !covariance.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMatrix(
                "covariance has non-finite entries".into(),
            ));
        }
        let sym = symmetrize(&covariance);
        let eigenvalues = sym.clone().symmetric_eigen().eigenvalues;
        let min = eigenvalues.min();
        if min < -PSD_TOL {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    /// Builds a belief by symmetrizing and eigenvalue-clamping the covariance.
    /// Used on the output of covariance recursions, which can drift slightly
    /// indefinite; never fails.
    pub fn from_projected(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        Self {
            covariance: symmetrize_and_project(covariance),
            mean,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Orthogonal eigenbasis and nonnegative eigenvalues of a covariance matrix.
///
/// Columns of `basis` are unit eigenvectors, eigenvalues are sorted in
/// descending order, and `basis * diag(eigenvalues) * basis^T` reconstructs
/// the input within [`RECON_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl SpectralDecomposition {
    /// Validating constructor for an externally supplied factorization.
    /// Checks orthogonality of `basis` and nonnegativity of `eigenvalues`.
    pub fn new(basis: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        let n = basis.nrows();
        if basis.ncols() != n {
            return Err(Error::InvalidMatrix(format!(
                "basis must be square, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if eigenvalues.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: eigenvalues.len(),
            });
        }
        let gram = basis.transpose() * &basis;
        let drift = (&gram - DMatrix::identity(n, n)).amax();
        if drift > 1e-10 {
            return Err(Error::InvalidMatrix(format!(
                "basis is not orthogonal (max deviation {drift:.3e})"
            )));
        }
        if eigenvalues.iter().any(|&c| c < 0.0) {
            return Err(Error::NotPsd {
                min_eigenvalue: eigenvalues.min(),
            });
        }
        Ok(Self { basis, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `basis * diag(eigenvalues) * basis^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.basis.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.eigenvalues[j];
        }
        scaled * self.basis.transpose()
    }

    /// Symmetric matrix square root `basis * diag(sqrt(eigenvalues))`.
    ///
    /// Column `i` of the result is the i-th principal axis scaled by the
    /// corresponding standard deviation; the product with its own transpose
    /// recovers the original matrix.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        let mut factor = self.basis.clone();
        for (j, mut col) in factor.column_iter_mut().enumerate() {
            col *= self.eigenvalues[j].sqrt();
        }
        factor
    }
}

/// Eigen-decomposition of a symmetric PSD matrix.
///
/// Eigenvalues come back sorted descending with negatives above `-PSD_TOL`
/// clamped to zero; each eigenvector is sign-fixed so its first component of
/// meaningful magnitude is nonnegative, which makes outputs reproducible.
pub fn spectral_decompose(matrix: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    require_symmetric(matrix)?;
    let sym = symmetrize(matrix);
    let eigen = sym.symmetric_eigen();

    let n = eigen.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues of a real symmetric matrix are finite")
    });

    let mut basis = DMatrix::zeros(n, n);
    let mut eigenvalues = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut value = eigen.eigenvalues[src];
        if value < 0.0 {
            if value < -PSD_TOL {
                return Err(Error::NotPsd {
                    min_eigenvalue: value,
                });
            }
            value = 0.0;
        }
        eigenvalues[dst] = value;

        let column = eigen.eigenvectors.column(src);
        let flip = column
            .iter()
            .find(|v| v.abs() > 1e-12)
            .is_some_and(|v| *v < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        basis.set_column(dst, &(column * sign));
    }

    Ok(SpectralDecomposition { basis, eigenvalues })
}

/// Solves `A * X = B` for symmetric positive-definite `A` via Cholesky,
/// without forming an explicit inverse.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_symmetric(a)?;
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

/// Nearest symmetric matrix `(P + P^T)/2` with negative eigenvalues clamped
/// to zero. Idempotent on valid covariances.
///
/// Non-finite input is returned symmetrized but unprojected: the iterative
/// eigensolver must never see NaN or infinity, and the poisoned values are
/// caught by the divergence checks downstream.
pub fn symmetrize_and_project(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(matrix);
    if !sym.iter().all(|v| v.is_finite()) {
        return sym;
    }
    let eigen = sym.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().all(|&c| c >= 0.0) {
        return sym;
    }
    let mut scaled = eigen.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eigen.eigenvalues[j].max(0.0);
    }
    let projected = scaled * eigen.eigenvectors.transpose();
    // Rebuilding from the eigenbasis reintroduces round-off asymmetry.
    symmetrize(&projected)
}

pub(crate) fn symmetrize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    (matrix + matrix.transpose()) * 0.5
}

fn require_symmetric(matrix: &DMatrix<f64>) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if !matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidMatrix("matrix has non-finite entries".into()));
    }
    let drift = (matrix - matrix.transpose()).amax();
    let scale = 1.0 + matrix.amax();
    if drift > SYM_TOL * scale {
        return Err(Error::InvalidMatrix(format!(
            "matrix is not symmetric (max asymmetry {drift:.3e})"
        )));
    }
    Ok(())
}
