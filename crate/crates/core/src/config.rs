//! Block geometry and the per-element bit budget.

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::lfsr::{MAX_LENGTH, MIN_LENGTH};

/// Bits per element, kept exact.
pub type Budget = Ratio<u32>;

/// Bits used by the shared exponent of every block.
pub const EXPONENT_BITS: u32 = 4;
/// Bits used by every quantized coefficient.
pub const COEFF_BITS: u32 = 4;

/// Block size `c`, latent dimension `p` and LFSR length `k`.
///
/// A block is stored in `k + 4 + 4p` bits, so the budget per element is
/// `(k + 4 + 4p) / c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockConfig {
    c: usize,
    p: usize,
    k: u32,
}

impl BlockConfig {
    /// 3 bits per element: C=12, P=4, K=16.
    pub const M3: BlockConfig = BlockConfig { c: 12, p: 4, k: 16 };
    /// 4 bits per element: C=8, P=3, K=16.
    pub const M4: BlockConfig = BlockConfig { c: 8, p: 3, k: 16 };

    pub fn new(c: usize, p: usize, k: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig("latent dimension must be positive".into()));
        }
        if p >= c {
            return Err(Error::InvalidConfig(format!(
                "latent dimension {p} must be smaller than block size {c}"
            )));
        }
        if c > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!("block size {c} exceeds 65535")));
        }
        if !(MIN_LENGTH..=MAX_LENGTH).contains(&k) {
            return Err(Error::InvalidConfig(format!(
                "LFSR length {k} outside {MIN_LENGTH}..={MAX_LENGTH}"
            )));
        }
        Ok(Self { c, p, k })
    }

    /// Like [`BlockConfig::new`], but also requires `m * c == k + 4 + 4p`.
    pub fn with_budget(c: usize, p: usize, k: u32, m: Budget) -> Result<Self> {
        let config = Self::new(c, p, k)?;
        if config.bits_per_element() != m {
            return Err(Error::InvalidConfig(format!(
                "{m} bits/element x {c} != {} block bits",
                config.block_bits()
            )));
        }
        Ok(config)
    }

    /// Preset for 3 or 4 bits per element.
    pub fn preset(bits: u32) -> Result<Self> {
        match bits {
            3 => Ok(Self::M3),
            4 => Ok(Self::M4),
            other => Err(Error::InvalidConfig(format!(
                "no preset for {other} bits per element (expected 3 or 4)"
            ))),
        }
    }

    pub fn block_size(&self) -> usize {
        self.c
    }

    pub fn latent_dim(&self) -> usize {
        self.p
    }

    pub fn seed_bits(&self) -> u32 {
        self.k
    }

    /// Stored bits per block.
    pub fn block_bits(&self) -> u32 {
        self.k + EXPONENT_BITS + COEFF_BITS * self.p as u32
    }

    pub fn bits_per_element(&self) -> Budget {
        Ratio::new(self.block_bits(), self.c as u32)
    }

    /// Number of blocks needed for `n` elements.
    pub fn block_count(&self, n: usize) -> usize {
        n.div_ceil(self.c)
    }

    /// Payload size in bytes for `n` elements, padded to a whole byte.
    pub fn payload_bytes(&self, n: usize) -> usize {
        (self.block_count(n) * self.block_bits() as usize).div_ceil(8)
    }
}

impl fmt::Display for BlockConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C={} P={} K={} (M={})",
            self.c,
            self.p,
            self.k,
            self.bits_per_element()
        )
    }
}
