//! Conditional denoiser `φ(v_t, Uᵀc, t) -> v̂_0`.
//!
//! ```text
//!  cond (K) ──► f(·), h(·) elementwise ──► γ, β
//!  v_t (K) ───────────────► v_fused = v_t + γ ⊙ cond + β ─┐
//!  t ──► sinusoid (d_t) ──► linear (d_t) ─────────────────┤ concat
//!                                                          ▼
//!                                  linear (K+d_t → h) ─ act ─ linear (h → K)
//! ```
//!
//! `f` and `h` are tiny scalar networks (`1 → w_f → 1`) shared across all
//! spectral coordinates. Their output heads start at zero, so an untrained
//! model ignores the condition until training moves them.
//!
//! Total parameter count for rank `K`, hidden width `h`, time dimension `d_t`
//! and FiLM width `w_f`:
//!
//! ```text
//! 2·(3·w_f + 1) + d_t·(d_t + 1) + (K + d_t + 1)·h + (h + 1)·K
//! ```

mod adam;
mod checkpoint;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{time_embedding, Batch, Denoiser, Dense, ScalarNet, TIME_FREQUENCY_SCALE};

use std::fmt::{Debug, Display};

/// Floating-point element type usable by the network (`f32` for training,
/// `f64` for gradient checks).
pub trait Real:
    ndarray::NdFloat + num_traits::FromPrimitive + std::iter::Sum + Default + Debug + Display
{
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Silu => x / (F::one() + (-x).exp()),
        }
    }

    /// Derivative at pre-activation `x` whose activation is `y`.
    pub fn derivative<F: Real>(self, x: F, y: F) -> F {
        match self {
            Activation::Tanh => F::one() - y * y,
            Activation::Silu => {
                let s = F::one() / (F::one() + (-x).exp());
                s + y * (F::one() - s)
            }
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Silu => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Silu),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "silu" | "swish" => Ok(Activation::Silu),
            other => Err(crate::Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        })
    }
}

/// Layer widths of a denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DenoiserShape {
    pub rank: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub film_width: usize,
    pub activation: Activation,
}

impl DenoiserShape {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            hidden: 1024,
            time_dim: 64,
            film_width: 16,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.rank == 0 || self.hidden == 0 || self.time_dim == 0 || self.film_width == 0 {
            return Err(crate::Error::InvalidParameter(format!(
                "denoiser dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let (k, h, dt, wf) = (self.rank, self.hidden, self.time_dim, self.film_width);
        2 * (3 * wf + 1) + dt * (dt + 1) + (k + dt + 1) * h + (h + 1) * k
    }
}
