use nalgebra::DMatrix;

use super::lanczos::SymmetricOperator;
use crate::dataio::InteractionMatrix;
use crate::error::{check_dim, Error, Result};

/// Largest item count for which dense reference paths are allowed.
pub const DENSE_ITEM_LIMIT: usize = 512;

/// Degree-normalized interaction matrix `D_U^{-1/2} X D_I^{-1/2}` in CSR form.
///
/// Entry `(u, i)` is `1 / sqrt(deg(u) deg(i))` where user `u` interacted with
/// item `i`. Zero-degree rows and columns hold no entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBipartite {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl NormalizedBipartite {
    pub fn new(m: &InteractionMatrix) -> Self {
        let du = m.user_degrees();
        let di = m.item_degrees();
        let mut row_ptr = Vec::with_capacity(m.n_users() + 1);
        let mut cols = Vec::with_capacity(m.nnz());
        let mut vals = Vec::with_capacity(m.nnz());
        row_ptr.push(0);
        for (u, row) in m.rows().iter().enumerate() {
            for &i in row {
                cols.push(i);
                vals.push(1.0 / (du[u] * di[i as usize]).sqrt());
            }
            row_ptr.push(cols.len());
        }
        Self {
            n_users: m.n_users(),
            n_items: m.n_items(),
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored value at `(user, item)`, zero when absent.
    pub fn get(&self, user: usize, item: u32) -> f64 {
        let (cols, vals) = self.row(user);
        cols.binary_search(&item).map_or(0.0, |k| vals[k])
    }

    fn row(&self, user: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[user]..self.row_ptr[user + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    /// `A v = X̃ᵀ (X̃ v)` without forming the item-item matrix.
    pub fn apply_item_gram(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_items, v.len())?;
        let mut out = vec![0.0; self.n_items];
        self.gram_into(v, &mut out);
        Ok(out)
    }

    fn gram_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for u in 0..self.n_users {
            let (cols, vals) = self.row(u);
            let y: f64 = cols.iter().zip(vals).map(|(&i, &w)| w * v[i as usize]).sum();
            if y != 0.0 {
                for (&i, &w) in cols.iter().zip(vals) {
                    out[i as usize] += w * y;
                }
            }
        }
    }

    /// Dense copy of X̃ for small reference computations.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n_items > DENSE_ITEM_LIMIT {
            return Err(Error::TooLarge {
                n: self.n_items,
                limit: DENSE_ITEM_LIMIT,
            });
        }
        let mut m = DMatrix::zeros(self.n_users, self.n_items);
        for u in 0..self.n_users {
            let (cols, vals) = self.row(u);
            for (&i, &w) in cols.iter().zip(vals) {
                m[(u, i as usize)] = w;
            }
        }
        Ok(m)
    }

    /// Dense item-item matrix `A = X̃ᵀ X̃`.
    pub fn dense_gram(&self) -> Result<DMatrix<f64>> {
        let x = self.to_dense()?;
        Ok(x.transpose() * x)
    }
}

impl SymmetricOperator for NormalizedBipartite {
    fn dim(&self) -> usize {
        self.n_items
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.gram_into(x, y);
    }
}
