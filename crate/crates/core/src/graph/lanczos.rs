//! Thick-restart Lanczos with full reorthogonalization.
//!
//! Finds the largest eigenpairs of a symmetric positive semi-definite operator
//! given only matrix-vector products. Every new Krylov vector is
//! orthogonalized twice against the whole basis (classical Gram-Schmidt,
//! repeated), which keeps the basis orthonormal to working precision even when
//! hundreds of Ritz pairs are retained. The projected matrix is therefore
//! accumulated in full rather than as a tridiagonal, and restarts keep the
//! best Ritz vectors plus the current residual direction.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SpectralBasis;
use crate::error::{Error, Result};

/// A symmetric linear operator on `R^dim`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// Writes `A x` into `y`; both have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosConfig {
    /// Number of eigenpairs to return.
    pub rank: usize,
    /// Nominal restart cycles; the hard budget is five times this.
    pub iterations: usize,
    /// Relative residual tolerance `‖Au - μu‖ ≤ tol · max(1, |μ|)`.
    pub tol: f64,
    pub seed: u64,
    /// Krylov subspace size; defaults to `min(n, 2·rank + 16)`.
    pub krylov_dim: Option<usize>,
}

impl LanczosConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            iterations: 10,
            tol: 1e-8,
            seed: 0,
            krylov_dim: None,
        }
    }

    fn max_cycles(&self) -> usize {
        5 * self.iterations.max(1)
    }
}

/// Computes the `cfg.rank` largest eigenpairs of `op`.
///
/// The result stores Laplacian frequencies `d = 1 - μ` in ascending order,
/// i.e. the lowest graph frequencies of `L = I - A` first. Eigenvectors are
/// sign-normalized so their largest-magnitude entry is positive. The content
/// hash of the returned basis is zeroed; see [`SpectralBasis::with_matrix_hash`].
pub fn truncated_eigendecomposition<O: SymmetricOperator + ?Sized>(
    op: &O,
    cfg: &LanczosConfig,
) -> Result<SpectralBasis> {
    let n = op.dim();
    let k = cfg.rank;
    if k == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    if k > n {
        return Err(Error::RankTooLarge { rank: k, dim: n });
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let ncv = cfg
        .krylov_dim
        .unwrap_or(2 * k + 16)
        .clamp((k + 1).min(n), n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut basis = Array2::<f64>::zeros((ncv, n));
    let mut proj = Array2::<f64>::zeros((ncv, ncv));
    let mut w = vec![0.0; n];

    let start = random_orthogonal(&mut rng, basis.slice(s![..0, ..]), n);
    basis.row_mut(0).assign(&start);
    let mut kept = 0usize;
    let max_cycles = cfg.max_cycles();

    for cycle in 0..max_cycles {
        // Expand the Krylov basis from `kept` up to `ncv` vectors.
        let mut beta = 0.0;
        for j in kept..ncv {
            op.apply(
                basis.row(j).as_slice().expect("rows are contiguous"),
                &mut w,
            );
            let mut wv = Array1::from(std::mem::take(&mut w));
            let before = norm(&wv);
            let coefs = orthogonalize(basis.slice(s![..=j, ..]), &mut wv);
            for (i, c) in coefs.iter().enumerate() {
                proj[[i, j]] = *c;
            }
            beta = norm(&wv);
            let broke_down = beta <= 1e-10 * before || beta < 1e-300;
            if broke_down {
                beta = 0.0;
            }
            if j + 1 < ncv {
                if broke_down {
                    let fresh = random_orthogonal(&mut rng, basis.slice(s![..=j, ..]), n);
                    basis.row_mut(j + 1).assign(&fresh);
                    proj[[j + 1, j]] = 0.0;
                } else {
                    basis.row_mut(j + 1).assign(&(&wv / beta));
                    proj[[j + 1, j]] = beta;
                }
            } else if !broke_down {
                wv /= beta;
            }
            w = wv.into_raw_vec_and_offset().0;
        }
        let residual_dir = Array1::from(w.clone());

        // Rayleigh-Ritz on the symmetrized projection.
        let sym = DMatrix::from_fn(ncv, ncv, |r, c| 0.5 * (proj[[r, c]] + proj[[c, r]]));
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..ncv).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let estimate = |idx: usize| beta * eig.eigenvectors[(ncv - 1, idx)].abs();
        let converged = order[..k].iter().all(|&idx| {
            estimate(idx) <= cfg.tol * eig.eigenvalues[idx].abs().max(1.0)
        });

        let last = cycle + 1 == max_cycles;
        if converged || last {
            let (values, vectors) = ritz_pairs(&eig, &order[..k], basis.view());
            let residuals = true_residuals(op, &values, &vectors);
            let ok = residuals
                .iter()
                .zip(&values)
                .all(|(r, mu)| *r <= cfg.tol * mu.abs().max(1.0));
            if ok || last {
                let result = assemble(values, vectors, residuals, cfg.seed);
                if ok {
                    return Ok(result);
                }
                let max_residual = result.residuals().iter().copied().fold(0.0, f64::max);
                return Err(Error::NotConverged {
                    cycles: max_cycles,
                    max_residual,
                    basis: Box::new(result),
                });
            }
        }

        // Thick restart: keep `l` Ritz vectors plus the residual direction.
        let l = (k + (ncv - k) / 2).min(ncv - 1).max(k.min(ncv - 1));
        let sel = &order[..l];
        let rot = Array2::from_shape_fn((l, ncv), |(r, c)| eig.eigenvectors[(c, sel[r])]);
        let ritz = rot.dot(&basis);
        proj.fill(0.0);
        basis.slice_mut(s![..l, ..]).assign(&ritz);
        for (r, &idx) in sel.iter().enumerate() {
            proj[[r, r]] = eig.eigenvalues[idx];
            let coupling = beta * eig.eigenvectors[(ncv - 1, idx)];
            proj[[l, r]] = coupling;
            proj[[r, l]] = coupling;
        }
        let next = if beta > 0.0 {
            let mut f = residual_dir;
            // Re-clean against the rotated basis; rounding in the rotation leaks a little.
            orthogonalize(basis.slice(s![..l, ..]), &mut f);
            let nf = norm(&f);
            if nf > 1e-8 {
                f / nf
            } else {
                random_orthogonal(&mut rng, basis.slice(s![..l, ..]), n)
            }
        } else {
            for r in 0..l {
                proj[[l, r]] = 0.0;
                proj[[r, l]] = 0.0;
            }
            random_orthogonal(&mut rng, basis.slice(s![..l, ..]), n)
        };
        basis.row_mut(l).assign(&next);
        kept = l;
    }
    unreachable!("the final cycle always returns")
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Two passes of classical Gram-Schmidt against the rows of `q`; returns the
/// accumulated projection coefficients.
fn orthogonalize(q: ArrayView2<f64>, w: &mut Array1<f64>) -> Array1<f64> {
    let mut total = Array1::zeros(q.nrows());
    if q.nrows() == 0 {
        return total;
    }
    for _ in 0..2 {
        let c = q.dot(&*w);
        *w -= &c.dot(&q);
        total += &c;
    }
    total
}

fn random_orthogonal(rng: &mut ChaCha8Rng, q: ArrayView2<f64>, n: usize) -> Array1<f64> {
    loop {
        let mut v: Array1<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        orthogonalize(q, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            return v / nv;
        }
    }
}

fn ritz_pairs(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    sel: &[usize],
    basis: ArrayView2<f64>,
) -> (Vec<f64>, Array2<f64>) {
    let ncv = basis.nrows();
    let rot = Array2::from_shape_fn((sel.len(), ncv), |(r, c)| eig.eigenvectors[(c, sel[r])]);
    let mut vectors = rot.dot(&basis);
    for mut row in vectors.axis_iter_mut(Axis(0)) {
        let nr = row.dot(&row).sqrt();
        row /= nr;
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            row.mapv_inplace(|x| -x);
        }
    }
    let values = sel.iter().map(|&i| eig.eigenvalues[i]).collect();
    (values, vectors)
}

fn true_residuals<O: SymmetricOperator + ?Sized>(
    op: &O,
    values: &[f64],
    vectors: &Array2<f64>,
) -> Vec<f64> {
    let n = vectors.ncols();
    let mut y = vec![0.0; n];
    vectors
        .axis_iter(Axis(0))
        .zip(values)
        .map(|(u, &mu)| {
            op.apply(u.as_slice().expect("rows are contiguous"), &mut y);
            y.iter()
                .zip(u.iter())
                .map(|(a, b)| (a - mu * b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn assemble(values: Vec<f64>, vectors: Array2<f64>, residuals: Vec<f64>, seed: u64) -> SpectralBasis {
    // Rows of `vectors` are eigenvectors; the basis stores them as columns.
    let d = values.iter().map(|mu| (1.0 - mu).clamp(0.0, 2.0)).collect();
    SpectralBasis::from_parts(vectors.reversed_axes(), d, residuals, [0; 32], seed)
        .expect("eigensolver output is well-formed")
}
