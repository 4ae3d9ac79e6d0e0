use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::NormalizedBipartite;
use crate::error::{check_dim, Result};

/// Dense `e^{-L t} x` with `L = I - X̃ᵀX̃`, via a full symmetric eigensolve.
///
/// Reference path for small graphs (at most
/// [`DENSE_ITEM_LIMIT`](super::DENSE_ITEM_LIMIT) items); it shares no code
/// with the iterative eigensolver.
pub fn heat_kernel_reference(b: &NormalizedBipartite, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(b.n_items(), x.len())?;
    let a = b.dense_gram()?;
    let n = a.nrows();
    let lap = DMatrix::<f64>::identity(n, n) - a;
    let eig = SymmetricEigen::new(lap);
    let q = &eig.eigenvectors;
    let coeffs = q.transpose() * DVector::from_column_slice(x);
    let scaled = DVector::from_fn(n, |i, _| (-t * eig.eigenvalues[i]).exp() * coeffs[i]);
    Ok((q * scaled).iter().copied().collect())
}
