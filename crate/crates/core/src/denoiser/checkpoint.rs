//! Binary model checkpoint.
//!
//! ```text
//! magic "SDIFFMDL" | u32 version | u64 K | u64 h | u64 d_t | u64 w_f
//! | u32 activation | [u8; 32] basis hash | u64 train steps
//! | parameters as f32 LE, tensor order of `Denoiser::tensors`
//! | optional: u64 adam step | first moments | second moments
//! ```

use std::io::Write;

use super::{Activation, AdamState, Denoiser, DenoiserShape};
use crate::error::{Error, Result};
use crate::graph::ByteReader;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SDIFFMDL";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Denoiser<f32>,
    pub optimizer: Option<AdamState<f32>>,
    pub basis_hash: [u8; 32],
    pub train_steps: u64,
}

fn write_params<W: Write>(out: &mut W, d: &Denoiser<f32>) -> std::io::Result<()> {
    for t in d.tensors() {
        for x in t {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> std::io::Result<()> {
    let s = ckpt.model.shape;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [s.rank, s.hidden, s.time_dim, s.film_width] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    out.write_all(&s.activation.code().to_le_bytes())?;
    out.write_all(&ckpt.basis_hash)?;
    out.write_all(&ckpt.train_steps.to_le_bytes())?;
    write_params(&mut out, &ckpt.model)?;
    if let Some(opt) = &ckpt.optimizer {
        out.write_all(&opt.step.to_le_bytes())?;
        write_params(&mut out, &opt.m)?;
        write_params(&mut out, &opt.v)?;
    }
    Ok(())
}

fn read_params(r: &mut ByteReader<'_>, shape: DenoiserShape) -> Result<Denoiser<f32>> {
    let mut d = Denoiser::zeros(shape);
    for t in d.tensors_mut() {
        for x in t.iter_mut() {
            *x = r.f32()?;
            if !x.is_finite() {
                return Err(Error::Decode("non-finite parameter".into()));
            }
        }
    }
    Ok(d)
}

/// Decodes a checkpoint, validating every length before allocating.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Decode("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Decode(format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.len_field()?;
        if *d == 0 || *d > MAX_DIM {
            return Err(Error::Decode(format!("layer width {d} out of range")));
        }
    }
    let activation = Activation::from_code(r.u32()?).ok_or_else(|| Error::Decode("unknown activation".into()))?;
    let shape = DenoiserShape {
        rank: dims[0],
        hidden: dims[1],
        time_dim: dims[2],
        film_width: dims[3],
        activation,
    };
    let basis_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let train_steps = r.u64()?;
    // Every term is below 2^42, so this cannot overflow u64.
    let count = shape.parameter_count();
    let param_bytes = count * 4;
    let with_opt = 8 + 3 * param_bytes;
    let optimizer_present = match r.remaining() {
        n if n == param_bytes => false,
        n if n == with_opt => true,
        n => {
            return Err(Error::Decode(format!(
                "checkpoint body has {n} bytes, expected {param_bytes} or {with_opt}"
            )))
        }
    };
    let model = read_params(&mut r, shape)?;
    let optimizer = if optimizer_present {
        let step = r.u64()?;
        let m = read_params(&mut r, shape)?;
        let v = read_params(&mut r, shape)?;
        if v.tensors().iter().any(|t| t.iter().any(|x| *x < 0.0)) {
            return Err(Error::Decode("negative second moment".into()));
        }
        Some(AdamState { m, v, step })
    } else {
        None
    };
    Ok(Checkpoint {
        model,
        optimizer,
        basis_hash,
        train_steps,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, self).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(&bytes)
    }
}
