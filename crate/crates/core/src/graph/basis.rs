use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_dim, Error, Result};

pub const BASIS_MAGIC: &[u8; 8] = b"SDIFFBAS";
pub const BASIS_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 32 + 8;

/// Truncated orthonormal eigenbasis of the item-item operator.
///
/// Column `j` of `vectors` is the eigenvector with Laplacian frequency
/// `frequencies[j]`; frequencies ascend, so column 0 is the smoothest signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    vectors: Array2<f64>,
    frequencies: Vec<f64>,
    residuals: Vec<f64>,
    matrix_hash: [u8; 32],
    seed: u64,
}

impl SpectralBasis {
    pub fn from_parts(
        vectors: Array2<f64>,
        frequencies: Vec<f64>,
        residuals: Vec<f64>,
        matrix_hash: [u8; 32],
        seed: u64,
    ) -> Result<Self> {
        let k = vectors.ncols();
        check_dim(k, frequencies.len())?;
        check_dim(k, residuals.len())?;
        if k == 0 || k > vectors.nrows() {
            return Err(Error::InvalidParameter(format!(
                "basis rank {k} invalid for {} items",
                vectors.nrows()
            )));
        }
        Ok(Self {
            vectors,
            frequencies,
            residuals,
            matrix_hash,
            seed,
        })
    }

    pub fn with_matrix_hash(mut self, hash: [u8; 32]) -> Self {
        self.matrix_hash = hash;
        self
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn n_items(&self) -> usize {
        self.vectors.nrows()
    }

    /// Laplacian eigenvalues `d`, ascending.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Eigenvalues `μ = 1 - d` of the item-item operator.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.frequencies.iter().map(|d| 1.0 - d).collect()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn matrix_hash(&self) -> &[u8; 32] {
        &self.matrix_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `n_items x rank` matrix with eigenvectors as columns.
    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, j: usize) -> ArrayView1<'_, f64> {
        self.vectors.column(j)
    }

    /// Row `item` of U: the spectral coordinates of a unit impulse on that item.
    pub fn item_row(&self, item: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(item)
    }

    /// Graph Fourier transform `Uᵀ x`.
    pub fn gft(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_items(), x.len())?;
        let x = ArrayView1::from(x);
        Ok(self.vectors.t().dot(&x).to_vec())
    }

    /// Inverse transform `U v`.
    pub fn igft(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rank(), v.len())?;
        let v = ArrayView1::from(v);
        Ok(self.vectors.dot(&v).to_vec())
    }

    /// `Uᵀ x` for a binary vector given by its nonzero indices.
    pub fn gft_binary(&self, items: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.rank()];
        for &i in items {
            for (o, u) in out.iter_mut().zip(self.vectors.row(i as usize)) {
                *o += u;
            }
        }
        out
    }

    /// The first `k` columns as a new basis (the `k` lowest frequencies).
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate rank {} basis to {k}",
                self.rank()
            )));
        }
        Ok(Self {
            vectors: self.vectors.slice(ndarray::s![.., ..k]).to_owned(),
            frequencies: self.frequencies[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            matrix_hash: self.matrix_hash,
            seed: self.seed,
        })
    }

    /// `max |UᵀU - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.vectors.t().dot(&self.vectors);
        gram.indexed_iter()
            .map(|((r, c), v)| (v - if r == c { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Serializes to the basis artifact layout: header, frequencies (f64),
    /// vectors column-major (f32), residuals (f64), all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(BASIS_MAGIC)?;
        out.write_all(&BASIS_VERSION.to_le_bytes())?;
        out.write_all(&(self.rank() as u64).to_le_bytes())?;
        out.write_all(&(self.n_items() as u64).to_le_bytes())?;
        out.write_all(&self.matrix_hash)?;
        out.write_all(&self.seed.to_le_bytes())?;
        for d in &self.frequencies {
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.n_items() * 4);
        for col in self.vectors.axis_iter(Axis(1)) {
            buf.clear();
            for &x in col {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        for r in &self.residuals {
            out.write_all(&r.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Decodes a basis artifact. Lengths are validated before any allocation.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8)? != BASIS_MAGIC {
            return Err(Error::Decode("bad basis magic".into()));
        }
        let version = r.u32()?;
        if version != BASIS_VERSION {
            return Err(Error::Decode(format!("unsupported basis version {version}")));
        }
        let k = r.len_field()?;
        let n = r.len_field()?;
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let seed = r.u64()?;
        if k == 0 || k > n {
            return Err(Error::Decode(format!("invalid rank {k} for {n} items")));
        }
        let body = k
            .checked_mul(n)
            .and_then(|kn| kn.checked_mul(4))
            .and_then(|b| b.checked_add(16 * k))
            .ok_or_else(|| Error::Decode("basis size overflows".into()))?;
        if r.remaining() != body {
            return Err(Error::Decode(format!(
                "basis body has {} bytes, header implies {body}",
                r.remaining()
            )));
        }
        debug_assert_eq!(bytes.len(), HEADER_LEN + body);
        let frequencies = r.f64s(k)?;
        if frequencies.iter().any(|d| !(0.0..=2.0).contains(d)) {
            return Err(Error::Decode("frequency outside [0, 2]".into()));
        }
        let mut vectors = Array2::<f64>::zeros((n, k));
        for c in 0..k {
            for row in 0..n {
                let x = r.f32()?;
                if !x.is_finite() {
                    return Err(Error::Decode("non-finite basis entry".into()));
                }
                vectors[[row, c]] = x as f64;
            }
        }
        let residuals = r.f64s(k)?;
        if residuals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Decode("invalid residual".into()));
        }
        Self::from_parts(vectors, frequencies, residuals, hash, seed)
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Decode("unexpected end of data".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A u64 length that must fit comfortably in memory arithmetic.
    pub(crate) fn len_field(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > u32::MAX as u64 {
            return Err(Error::Decode(format!("length field {v} too large")));
        }
        Ok(v as usize)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Decode("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::InteractionMatrix;
    use crate::graph::{truncated_eigendecomposition, LanczosConfig, NormalizedBipartite};
    use proptest::prelude::*;

    fn toy_basis(k: usize) -> SpectralBasis {
        let m = InteractionMatrix::from_rows(
            vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 3, 4], vec![2, 4], vec![0, 1, 4]],
            5,
        )
        .unwrap();
        let b = NormalizedBipartite::new(&m);
        truncated_eigendecomposition(&b, &LanczosConfig::new(k))
            .unwrap()
            .with_matrix_hash(m.content_hash())
    }

    #[test]
    fn full_rank_round_trip() {
        let basis = toy_basis(5);
        let x = [0.5, -2.0, 1.0, 0.0, 3.0];
        let back = basis.igft(&basis.gft(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvector_maps_to_unit_coordinate() {
        let basis = toy_basis(5);
        for j in 0..5 {
            let v = basis.gft(&basis.vector(j).to_vec()).unwrap();
            for (i, x) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((x - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_gft_matches_dense() {
        let basis = toy_basis(3);
        let dense = basis.gft(&[1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let sparse = basis.gft_binary(&[0, 2, 4]);
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let basis = toy_basis(3);
        assert!(basis.gft(&[1.0; 4]).is_err());
        assert!(basis.igft(&[1.0; 5]).is_err());
    }

    #[test]
    fn artifact_round_trip_and_layout() {
        let basis = toy_basis(3);
        let bytes = basis.to_bytes();
        assert_eq!(&bytes[..8], b"SDIFFBAS");
        assert_eq!(bytes.len(), HEADER_LEN + 3 * 8 + 5 * 3 * 4 + 3 * 8);
        // d starts right after the header as f64 LE.
        let d0 = f64::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 8].try_into().unwrap());
        assert_eq!(d0, basis.frequencies()[0]);
        // first U entry is item 0 of column 0, as f32.
        let off = HEADER_LEN + 24;
        let u00 = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(u00, basis.vectors()[[0, 0]] as f32);

        let back = SpectralBasis::from_bytes(&bytes).unwrap();
        assert_eq!(back.frequencies(), basis.frequencies());
        assert_eq!(back.residuals(), basis.residuals());
        assert_eq!(back.matrix_hash(), basis.matrix_hash());
        assert!(back.orthonormality_error() < 1e-6);
    }

    #[test]
    fn decoder_rejects_truncation_and_bad_headers() {
        let bytes = toy_basis(2).to_bytes();
        for cut in [0, 7, 20, HEADER_LEN, bytes.len() - 1] {
            assert!(SpectralBasis::from_bytes(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SpectralBasis::from_bytes(&bad).is_err());
        let mut huge = bytes.clone();
        huge[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(SpectralBasis::from_bytes(&huge).is_err());
    }

    proptest! {
        #[test]
        fn truncated_projection_contracts(x in proptest::collection::vec(-5.0f64..5.0, 5), k in 1usize..5) {
            let basis = toy_basis(5).truncate(k).unwrap();
            let p = basis.igft(&basis.gft(&x).unwrap()).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let np: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(np <= nx + 1e-12);
            // projection is idempotent
            let pp = basis.igft(&basis.gft(&p).unwrap()).unwrap();
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = SpectralBasis::from_bytes(&bytes);
        }
    }
}
