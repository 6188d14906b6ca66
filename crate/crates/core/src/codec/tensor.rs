//! Whole-tensor compression: flat row-major blocking, zero-padded tail,
//! blocks searched independently (and in parallel).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{reconstruct_into, search_indices, CompressedBlock, SearchOptions};
use crate::config::BlockConfig;
use crate::error::{Error, Result};
use crate::lfsr::CycleCache;

/// Tensor dimensions; every dimension is positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("rank must be at least 1".into()));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::InvalidShape(format!("rank {} exceeds 255", dims.len())));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidShape("dimensions must be positive".into()));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape("element count overflows".into()))?;
        Ok(Self(dims))
    }

    /// Rank-1 shape of `n` elements.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// Parses `d0xd1x...`, e.g. `64x128`.
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(['x', 'X'])
            .map(|d| {
                d.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidShape(format!("cannot parse '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }
}

/// A tensor's shape and its ordered block records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedTensor {
    pub config: BlockConfig,
    pub shape: Shape,
    pub blocks: Vec<CompressedBlock>,
}

impl CompressedTensor {
    pub fn new(config: BlockConfig, shape: Shape, blocks: Vec<CompressedBlock>) -> Result<Self> {
        let expected = config.block_count(shape.numel());
        if blocks.len() != expected {
            return Err(Error::InvalidShape(format!(
                "{} elements need {expected} blocks, got {}",
                shape.numel(),
                blocks.len()
            )));
        }
        Ok(Self {
            config,
            shape,
            blocks,
        })
    }

    pub fn element_count(&self) -> usize {
        self.shape.numel()
    }

    /// Number of real elements in the last block, in `1..=C`.
    pub fn tail_length(&self) -> usize {
        let c = self.config.block_size();
        self.element_count() - c * (self.blocks.len() - 1)
    }

    /// Payload size in bits, before byte padding.
    pub fn payload_bits(&self) -> usize {
        self.blocks.len() * self.config.block_bits() as usize
    }
}

/// Error summary of one compressed tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionStats {
    /// Squared error of every block, padding included.
    pub block_errors: Vec<f64>,
    /// Mean squared error over the real elements of the decoded (f32) tensor.
    pub mse: f64,
    /// Sum of squared errors over the sum of squared weights; 0 for a zero tensor.
    pub relative_error: f64,
    pub max_abs_error: f64,
    /// How often each seed was chosen.
    pub seed_histogram: BTreeMap<u32, usize>,
}

impl ReconstructionStats {
    /// Compares an original tensor with its decoded approximation.
    pub fn compare(original: &[f32], decoded: &[f32]) -> Result<Self> {
        if original.len() != decoded.len() {
            return Err(Error::ShapeMismatch {
                shape: format!("{}", original.len()),
                expected: original.len(),
                found: decoded.len(),
            });
        }
        let mut sse = 0.0;
        let mut energy = 0.0;
        let mut max_abs: f64 = 0.0;
        for (&a, &b) in original.iter().zip(decoded) {
            let d = f64::from(a) - f64::from(b);
            sse += d * d;
            energy += f64::from(a) * f64::from(a);
            max_abs = max_abs.max(d.abs());
        }
        Ok(Self {
            block_errors: Vec::new(),
            mse: if original.is_empty() { 0.0 } else { sse / original.len() as f64 },
            relative_error: if energy > 0.0 { sse / energy } else { 0.0 },
            max_abs_error: max_abs,
            seed_histogram: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompressOptions {
    pub search: SearchOptions,
    /// Worker threads; `None` uses the global pool. Output does not depend on it.
    pub threads: Option<usize>,
}

/// Splits `data` into blocks of `C`, zero-pads the last one, and compresses
/// each block independently.
pub fn compress_tensor(
    data: &[f32],
    shape: &Shape,
    cache: &super::PseudoInverseCache,
    options: &CompressOptions,
) -> Result<(CompressedTensor, ReconstructionStats)> {
    if data.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if shape.numel() != data.len() {
        return Err(Error::ShapeMismatch {
            shape: shape.to_string(),
            expected: shape.numel(),
            found: data.len(),
        });
    }
    if let Some(index) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let config = *cache.config();
    let c = config.block_size();
    let indices = options.search.candidates.indices(cache)?;
    let rule = options.search.exponent_rule;

    let run = || -> Result<Vec<(CompressedBlock, f64)>> {
        data.par_chunks(c)
            .map(|chunk| {
                let mut w = vec![0.0f64; c];
                for (slot, &x) in w.iter_mut().zip(chunk) {
                    *slot = f64::from(x);
                }
                search_indices(&w, cache, &indices, rule)
            })
            .collect()
    };
    let results = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let (blocks, block_errors): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let ct = CompressedTensor::new(config, shape.clone(), blocks)?;
    let decoded = decode_with(&ct, |seed| cache.basis(seed).map(<[f64]>::to_vec))?;
    let mut stats = ReconstructionStats::compare(data, &decoded)?;
    stats.block_errors = block_errors;
    for block in &ct.blocks {
        *stats.seed_histogram.entry(block.seed).or_default() += 1;
    }
    Ok((ct, stats))
}

/// Decodes every block and drops the tail padding.
pub fn decompress_tensor(ct: &CompressedTensor, cycle: &CycleCache) -> Result<Vec<f32>> {
    if ct.config.seed_bits() != cycle.spec().k() {
        return Err(Error::InvalidConfig(format!(
            "tensor uses K={} but the cycle cache has k={}",
            ct.config.seed_bits(),
            cycle.spec().k()
        )));
    }
    let (c, p) = (ct.config.block_size(), ct.config.latent_dim());
    decode_with(ct, |seed| cycle.normalized_matrix(seed, c, p))
}

fn decode_with<F>(ct: &CompressedTensor, basis_for: F) -> Result<Vec<f32>>
where
    F: Fn(u32) -> Result<Vec<f64>>,
{
    let c = ct.config.block_size();
    let p = ct.config.latent_dim();
    let n = ct.element_count();
    let mut out = Vec::with_capacity(ct.blocks.len() * c);
    let mut buf = vec![0.0; c];
    for (index, block) in ct.blocks.iter().enumerate() {
        if block.seed == 0 {
            return Err(Error::CorruptBlock {
                block: index,
                seed: 0,
            });
        }
        if block.coeffs.q.len() != p || !block.coeffs.is_valid() {
            return Err(Error::CorruptBlock {
                block: index,
                seed: block.seed,
            });
        }
        if block.coeffs.is_zero() {
            buf.fill(0.0);
        } else {
            let basis = basis_for(block.seed).map_err(|_| Error::CorruptBlock {
                block: index,
                seed: block.seed,
            })?;
            reconstruct_into(&basis, &super::dequantize(&block.coeffs), &mut buf);
        }
        out.extend(buf.iter().map(|&x| x as f32));
    }
    out.truncate(n);
    Ok(out)
}
