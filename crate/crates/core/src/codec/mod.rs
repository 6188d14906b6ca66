//! Seed search and reconstruction for single blocks and whole tensors.
//!
//! For every candidate seed the block is projected onto `U(s)` with the cached
//! pseudo-inverse, the coefficients are quantized, and the squared error of the
//! quantized reconstruction is measured. The seed with the smallest error wins;
//! ties go to the smaller seed.

mod pinv;
mod quant;
mod tensor;

pub use pinv::{pseudo_inverse, PseudoInverseCache, RANK_TOLERANCE};
pub use quant::{
    dequantize, quantize_coefficients, quantize_with, ExponentRule, QuantizedCoefficients, E_MAX,
    E_MIN, Q_MAX, Q_MIN,
};
pub use tensor::{
    compress_tensor, decompress_tensor, CompressOptions, CompressedTensor, ReconstructionStats,
    Shape,
};

use crate::config::BlockConfig;
use crate::error::{Error, Result};
use crate::lfsr::CycleCache;

/// Seed and quantized coefficients for one block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompressedBlock {
    pub seed: u32,
    pub coeffs: QuantizedCoefficients,
}

impl CompressedBlock {
    pub fn zero(p: usize) -> Self {
        Self {
            seed: 1,
            coeffs: QuantizedCoefficients::zero(p),
        }
    }
}

/// Which seeds the search visits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Candidates {
    /// Every seed in the pseudo-inverse cache.
    #[default]
    All,
    /// Seeds `1, 1 + n, 1 + 2n, ...` that are present in the cache.
    Stride(u32),
    /// An explicit list; every entry must be cached.
    List(Vec<u32>),
}

impl Candidates {
    /// Cache indices to visit, ascending by seed.
    fn indices(&self, cache: &PseudoInverseCache) -> Result<Vec<usize>> {
        match self {
            Candidates::All => Ok((0..cache.len()).collect()),
            Candidates::Stride(0) => Err(Error::InvalidConfig("seed stride must be positive".into())),
            Candidates::Stride(n) => Ok((0..cache.len())
                .filter(|&i| (cache.seed_at(i) - 1).is_multiple_of(*n))
                .collect()),
            Candidates::List(seeds) => {
                let mut idx = seeds
                    .iter()
                    .map(|&seed| cache.index_of(seed).ok_or(Error::SeedNotCached { seed }))
                    .collect::<Result<Vec<_>>>()?;
                idx.sort_unstable();
                idx.dedup();
                Ok(idx)
            }
        }
    }
}

/// Search parameters shared by every block of a run.
#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub candidates: Candidates,
    pub exponent_rule: ExponentRule,
}

/// `out = U * t`, with `U` row-major `out.len() x t.len()`.
#[inline]
fn reconstruct_into(basis: &[f64], t: &[f64], out: &mut [f64]) {
    let p = t.len();
    for (r, slot) in out.iter_mut().enumerate() {
        let row = &basis[r * p..(r + 1) * p];
        *slot = row.iter().zip(t).map(|(u, x)| u * x).sum();
    }
}

/// `||w - U t||^2`, giving up (and returning something `> bound`) once the
/// partial sum exceeds `bound`.
#[inline]
fn residual(w: &[f64], basis: &[f64], t: &[f64], bound: f64) -> f64 {
    let p = t.len();
    let mut err = 0.0;
    for (r, &x) in w.iter().enumerate() {
        let row = &basis[r * p..(r + 1) * p];
        let approx: f64 = row.iter().zip(t).map(|(u, x)| u * x).sum();
        let d = x - approx;
        err += d * d;
        if err > bound {
            return err;
        }
    }
    err
}

/// Finds the candidate seed and quantized coefficients minimizing the squared
/// reconstruction error of `w`. Returns the block and its error.
pub fn compress_block(
    w: &[f64],
    cache: &PseudoInverseCache,
    options: &SearchOptions,
) -> Result<(CompressedBlock, f64)> {
    let indices = options.candidates.indices(cache)?;
    search_indices(w, cache, &indices, options.exponent_rule)
}

fn search_indices(
    w: &[f64],
    cache: &PseudoInverseCache,
    indices: &[usize],
    rule: ExponentRule,
) -> Result<(CompressedBlock, f64)> {
    let config = cache.config();
    let (c, p) = (config.block_size(), config.latent_dim());
    if w.len() != c {
        return Err(Error::BlockLength {
            expected: c,
            found: w.len(),
        });
    }
    if let Some(index) = w.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if w.iter().all(|&x| x == 0.0) {
        return Ok((CompressedBlock::zero(p), 0.0));
    }
    if indices.is_empty() {
        return Err(Error::InvalidConfig("no candidate seeds to search".into()));
    }

    let mut t = vec![0.0; p];
    let mut q = vec![0i8; p];
    let mut deq = vec![0.0; p];
    let mut best_err = f64::INFINITY;
    let mut best_index = indices[0];
    let mut best_q = vec![0i8; p];
    let mut best_e = E_MIN;

    for &i in indices {
        let op = cache.pinv_at(i);
        for (j, slot) in t.iter_mut().enumerate() {
            let row = &op[j * c..(j + 1) * c];
            *slot = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
        let e = quant::quantize_into(&t, &mut q, rule);
        let scale = quant::pow2(e);
        for (d, &qi) in deq.iter_mut().zip(&q) {
            *d = f64::from(qi) * scale;
        }
        let err = residual(w, cache.basis_at(i), &deq, best_err);
        if err < best_err {
            best_err = err;
            best_index = i;
            best_q.copy_from_slice(&q);
            best_e = e;
        }
    }

    let block = CompressedBlock {
        seed: cache.seed_at(best_index),
        coeffs: QuantizedCoefficients { q: best_q, e: best_e },
    };
    Ok((block, best_err))
}

/// `U(seed) * dequantize(coeffs)`.
pub fn reconstruct_block(
    block: &CompressedBlock,
    config: &BlockConfig,
    cycle: &CycleCache,
) -> Result<Vec<f64>> {
    let (c, p) = (config.block_size(), config.latent_dim());
    if config.seed_bits() != cycle.spec().k() {
        return Err(Error::InvalidConfig(format!(
            "config uses K={} but the cycle cache has k={}",
            config.seed_bits(),
            cycle.spec().k()
        )));
    }
    if block.coeffs.q.len() != p || !block.coeffs.is_valid() {
        return Err(Error::InvalidConfig(format!(
            "block coefficients do not fit P={p} 4-bit values"
        )));
    }
    let basis = cycle.normalized_matrix(block.seed, c, p)?;
    let mut out = vec![0.0; c];
    reconstruct_into(&basis, &dequantize(&block.coeffs), &mut out);
    Ok(out)
}

/// Squared reconstruction error of `block` against `w`.
pub fn block_error(
    w: &[f64],
    block: &CompressedBlock,
    config: &BlockConfig,
    cycle: &CycleCache,
) -> Result<f64> {
    let approx = reconstruct_block(block, config, cycle)?;
    if approx.len() != w.len() {
        return Err(Error::BlockLength {
            expected: approx.len(),
            found: w.len(),
        });
    }
    Ok(w.iter().zip(&approx).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small() -> (BlockConfig, CycleCache, PseudoInverseCache) {
        let config = BlockConfig::new(4, 2, 3).unwrap();
        let cycle = CycleCache::for_length(3).unwrap();
        let cache = PseudoInverseCache::build(config, &cycle).unwrap();
        (config, cycle, cache)
    }

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_block_short_circuits() {
        let (_, _, cache) = small();
        let (block, err) = compress_block(&[0.0; 4], &cache, &SearchOptions::default()).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(block, CompressedBlock::zero(2));
    }

    #[test]
    fn exact_column_is_recovered() {
        let (config, cycle, cache) = small();
        let u5 = cycle.normalized_matrix(5, 4, 2).unwrap();
        let w: Vec<f64> = (0..4).map(|r| u5[r * 2]).collect();
        let (block, err) = compress_block(&w, &cache, &SearchOptions::default()).unwrap();
        assert!(err < 1e-24, "err = {err}");
        assert_eq!(block_error(&w, &block, &config, &cycle).unwrap(), err);
    }

    #[test]
    fn wrong_length_rejected() {
        let (_, _, cache) = small();
        assert!(matches!(
            compress_block(&[1.0; 3], &cache, &SearchOptions::default()),
            Err(Error::BlockLength { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn reconstruct_by_hand() {
        let (config, cycle, _) = small();
        let block = CompressedBlock {
            seed: 4,
            coeffs: QuantizedCoefficients { q: vec![1, 1], e: 0 },
        };
        let out = reconstruct_block(&block, &config, &cycle).unwrap();
        let want = [-1.0 / 3.0, 5.0 / 3.0, -4.0 / 3.0, -2.0 / 3.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_coefficients_reconstruct_to_zero() {
        let (config, cycle, _) = small();
        for seed in 1..=7 {
            let block = CompressedBlock {
                seed,
                coeffs: QuantizedCoefficients::zero(2),
            };
            assert_eq!(reconstruct_block(&block, &config, &cycle).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn bad_seed_rejected_on_reconstruct() {
        let (config, cycle, _) = small();
        let mut block = CompressedBlock::zero(2);
        block.seed = 0;
        assert!(reconstruct_block(&block, &config, &cycle).is_err());
        block.seed = 8;
        assert!(reconstruct_block(&block, &config, &cycle).is_err());
    }

    #[test]
    fn reported_error_matches_reconstruction() {
        let config = BlockConfig::M4;
        let cycle = CycleCache::for_length(16).unwrap();
        let cache = PseudoInverseCache::build(config, &cycle).unwrap();
        let opts = SearchOptions {
            candidates: Candidates::Stride(7),
            ..Default::default()
        };
        for s in 0..20 {
            let w = gaussian(8, s);
            let (block, err) = compress_block(&w, &cache, &opts).unwrap();
            let again = block_error(&w, &block, &config, &cycle).unwrap();
            assert!((again - err).abs() <= 1e-6 * err.max(1e-300), "{again} vs {err}");
        }
    }

    #[test]
    fn stride_and_list_candidates() {
        let (_, _, cache) = small();
        assert_eq!(Candidates::Stride(3).indices(&cache).unwrap(), vec![0, 3, 6]);
        assert_eq!(Candidates::List(vec![5, 2, 5]).indices(&cache).unwrap(), vec![1, 4]);
        assert!(Candidates::List(vec![9]).indices(&cache).is_err());
        assert!(Candidates::Stride(0).indices(&cache).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn returned_error_is_the_minimum(seed in any::<u64>()) {
            let (config, cycle, cache) = small();
            let w = gaussian(4, seed);
            let (block, err) = compress_block(&w, &cache, &SearchOptions::default()).unwrap();
            for s in 1..=7u32 {
                let t: Vec<f64> = {
                    let op = cache.operator(s).unwrap();
                    (0..2).map(|j| (0..4).map(|r| op[j * 4 + r] * w[r]).sum()).collect()
                };
                let cand = CompressedBlock { seed: s, coeffs: quantize_coefficients(&t).unwrap() };
                let e = block_error(&w, &cand, &config, &cycle).unwrap();
                prop_assert!(err <= e + 1e-12 * e.max(1.0));
                if e == err { prop_assert!(block.seed <= s); }
            }
        }

        #[test]
        fn superset_search_is_never_worse(seed in any::<u64>(), cut in 1u32..7) {
            let (_, _, cache) = small();
            let w = gaussian(4, seed);
            let sub = SearchOptions { candidates: Candidates::List((1..=cut).collect()), ..Default::default() };
            let (_, e_sub) = compress_block(&w, &cache, &sub).unwrap();
            let (_, e_all) = compress_block(&w, &cache, &SearchOptions::default()).unwrap();
            prop_assert!(e_all <= e_sub);
        }

        #[test]
        fn least_squares_residual_bounded_by_norm(seed in any::<u64>(), s in 1u32..=7) {
            let (_, _, cache) = small();
            let w = gaussian(4, seed);
            let op = cache.operator(s).unwrap();
            let t: Vec<f64> = (0..2).map(|j| (0..4).map(|r| op[j * 4 + r] * w[r]).sum()).collect();
            let mut approx = vec![0.0; 4];
            reconstruct_into(cache.basis(s).unwrap(), &t, &mut approx);
            let res: f64 = w.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum();
            let norm: f64 = w.iter().map(|x| x * x).sum();
            prop_assert!(res.sqrt() <= norm.sqrt() * (1.0 + 1e-9));
        }
    }
}
