use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no tap table entry for register length {0} (supported: 2..=24)")]
    UnsupportedLength(u32),

    #[error("LFSR with k={k} closed its cycle after {period} steps, expected {expected}")]
    NotMaximalLength { k: u32, period: u64, expected: u64 },

    #[error("seed {seed} is outside 1..={max}")]
    InvalidSeed { seed: u32, max: u32 },

    #[error("invalid block config: {0}")]
    InvalidConfig(String),

    #[error("expected a block of {expected} values, got {found}")]
    BlockLength { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape {shape} holds {expected} elements but {found} were supplied")]
    ShapeMismatch {
        shape: String,
        expected: usize,
        found: usize,
    },

    #[error("block {block} is corrupt (seed {seed})")]
    CorruptBlock { block: usize, seed: u32 },

    #[error("{path}: file is {found} bytes, expected {expected}")]
    FileSize {
        path: String,
        expected: u64,
        found: u64,
    },

    #[error("seed {seed} is not present in the pseudo-inverse cache")]
    SeedNotCached { seed: u32 },

    #[error("bad magic bytes, not an SDLM container")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated input while reading {context}")]
    Truncated { context: String },

    #[error("tensor '{tensor}': payload is {found} bytes, expected {expected}")]
    PayloadSize {
        tensor: String,
        expected: usize,
        found: usize,
    },

    #[error("tensor '{tensor}': block {block} has a zero seed")]
    ZeroSeed { tensor: String, block: usize },

    #[error("tensor '{tensor}': non-zero padding bits after the last block")]
    NonZeroPadding { tensor: String },

    #[error("tensor name is not valid UTF-8")]
    InvalidName,

    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),

    #[error(transparent)]
    Io(#[from] io::Error),
}
