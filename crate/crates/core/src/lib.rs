pub mod config;
pub mod dataio;
pub mod denoiser;
pub mod experiment;
mod error;
pub mod graph;
pub mod metrics;
pub mod sampler;
pub mod schedule;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
