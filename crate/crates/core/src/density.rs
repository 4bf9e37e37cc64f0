//! Validated density matrices.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{ComplexMatrix, HERMITIAN_TOL};

/// Tolerance on `|tr ρ - 1|` at construction.
pub const TRACE_TOL: f64 = 1e-12;
/// Tolerance on `‖ψ‖ - 1` for state vectors supplied by the user.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("density matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("state vector norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("state vector must have at least 2 components, got {0}")]
    TooShort(usize),
}

/// Hermitian, unit-trace `N×N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, DensityError> {
        let dev = matrix.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(DensityError::NotHermitian(dev));
        }
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(DensityError::BadTrace(tr.re));
        }
        Ok(Self(matrix))
    }

    /// `|ψ><ψ|` for a unit vector `ψ` (norm checked to [`NORM_TOL`], then
    /// normalized exactly).
    pub fn from_pure(psi: &[C64]) -> Result<Self, DensityError> {
        if psi.len() < 2 {
            return Err(DensityError::TooShort(psi.len()));
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(DensityError::NotNormalized(norm));
        }
        let unit: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Ok(Self(ComplexMatrix::outer(&unit)))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn purity(&self) -> f64 {
        purity(&self.0)
    }
}

/// `tr(ρ²)` for a Hermitian matrix.
pub fn purity(rho: &ComplexMatrix) -> f64 {
    rho.as_slice().iter().map(|z| z.norm_sqr()).sum()
}
