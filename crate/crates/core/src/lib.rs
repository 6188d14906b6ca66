//! Weight-tensor compression with pseudo-random bases.
//!
//! Each block of `C` weights is replaced by the seed of a maximal-length LFSR
//! and `P` quantized coefficients. The seed regenerates a `C x P` matrix whose
//! columns, weighted by the coefficients, approximate the block.
//!
//! - [`lfsr`]: registers, the state-cycle cache and basis matrices
//! - [`codec`]: quantization, seed search and (de)compression
//! - [`container`]: the `SDLM1` file format and raw f32 tensor files
//! - [`explorer`]: grid search over block geometries for a bit budget

pub mod codec;
pub mod config;
pub mod container;
mod error;
pub mod explorer;
pub mod lfsr;

pub use codec::{
    compress_block, compress_tensor, decompress_tensor, reconstruct_block, Candidates,
    CompressOptions, CompressedBlock, CompressedTensor, ExponentRule, PseudoInverseCache,
    QuantizedCoefficients, ReconstructionStats, SearchOptions, Shape,
};
pub use config::{BlockConfig, Budget};
pub use container::{read_plain_tensor, write_plain_tensor, Container, NamedTensor};
pub use error::{Error, Result};
pub use lfsr::{CycleCache, LfsrSpec};
