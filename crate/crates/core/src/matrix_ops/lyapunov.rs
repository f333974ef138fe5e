use nalgebra::DMatrix;

use super::{spectral_abscissa, symmetrize};
use crate::error::{Error, Result};

/// Solves `a_clᵀ V + V a_cl = −w` for `V`.
///
/// The equation is vectorized column-major into the n²×n² system
/// `(I ⊗ a_clᵀ + a_clᵀ ⊗ I) vec(V) = −vec(w)` and solved by LU.
/// The result is symmetrized before returning.
pub fn solve_lyapunov(a_cl: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_cl.nrows();
    if !a_cl.is_square() || w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyapunov: a_cl is {}x{}, w is {}x{}",
            a_cl.nrows(),
            a_cl.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let abscissa = spectral_abscissa(a_cl)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }

    let at = a_cl.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let kron = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let vec_v = kron
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker system in Lyapunov solve".into()))?;
    let v = DMatrix::from_column_slice(n, n, vec_v.as_slice());
    Ok(symmetrize(&v))
}
