//! Dense linear-algebra kernels used throughout the certificate pipeline.
//!
//! Eigen- and singular-value computations are delegated to `nalgebra`;
//! the matrix exponential and the Lyapunov solve are implemented here.

mod expm;
mod lyapunov;
mod quadrature;

pub use expm::expm;
pub use lyapunov::solve_lyapunov;
pub use quadrature::{Integrand, QuadratureGrid};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check in [`sym_eig_extremes`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Which matrix norm to use wherever a bound calls for `‖M‖`.
///
/// The induced 2-norm is the tightest valid choice; Frobenius dominates it
/// and yields a more conservative certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixNorm {
    #[default]
    Spectral,
    Frobenius,
}

impl MatrixNorm {
    pub fn eval(self, m: &DMatrix<f64>) -> f64 {
        match self {
            MatrixNorm::Spectral => spectral_norm(m),
            MatrixNorm::Frobenius => m.norm(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatrixNorm::Spectral => "spectral",
            MatrixNorm::Frobenius => "frobenius",
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * m.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = m.clone().symmetric_eigenvalues();
    Ok((eig.min(), eig.max()))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// Largest real part over the spectrum. Hurwitz iff negative.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "spectral abscissa needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)]);
    }
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Checks that `m` is symmetric positive definite, naming it `what` in the error.
pub fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let (lo, _) = sym_eig_extremes(m).map_err(|_| Error::NotPositiveDefinite(what.into()))?;
    if lo > 0.0 {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite(what.into()))
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
