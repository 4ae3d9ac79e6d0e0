//! Item-item graph operators and their truncated spectrum.

mod basis;
mod bipartite;
mod heat;
mod lanczos;

pub use basis::{SpectralBasis, BASIS_MAGIC, BASIS_VERSION};
pub use bipartite::{NormalizedBipartite, DENSE_ITEM_LIMIT};
pub use heat::heat_kernel_reference;
pub use lanczos::{truncated_eigendecomposition, LanczosConfig, SymmetricOperator};

pub(crate) use basis::ByteReader;

use crate::dataio::InteractionMatrix;
use crate::error::Result;

/// Builds the normalized item graph of `m` and its lowest-frequency basis,
/// stamped with the content hash of `m`.
pub fn build_basis(m: &InteractionMatrix, cfg: &LanczosConfig) -> Result<SpectralBasis> {
    let op = NormalizedBipartite::new(m);
    let hash = m.content_hash();
    match truncated_eigendecomposition(&op, cfg) {
        Ok(b) => Ok(b.with_matrix_hash(hash)),
        Err(crate::Error::NotConverged {
            cycles,
            max_residual,
            basis,
        }) => Err(crate::Error::NotConverged {
            cycles,
            max_residual,
            basis: Box::new(basis.with_matrix_hash(hash)),
        }),
        Err(e) => Err(e),
    }
}
