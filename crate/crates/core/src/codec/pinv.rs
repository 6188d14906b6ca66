//! Precomputed least-squares operators for every candidate seed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::BlockConfig;
use crate::error::{Error, Result};
use crate::lfsr::CycleCache;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// For each candidate seed `s`, the basis `U(s)` (`C x P`, row-major) and its
/// Moore-Penrose pseudo-inverse `U(s)†` (`P x C`, row-major), both in f64.
#[derive(Debug, Clone)]
pub struct PseudoInverseCache {
    config: BlockConfig,
    /// `None` when every seed `1..=2^K-1` is present, in order.
    seeds: Option<Vec<u32>>,
    basis: Vec<f64>,
    pinv: Vec<f64>,
}

impl PseudoInverseCache {
    /// Operators for every nonzero seed.
    pub fn build(config: BlockConfig, cycle: &CycleCache) -> Result<Self> {
        check_lengths(&config, cycle)?;
        let seeds: Vec<u32> = (1..=cycle.spec().period()).collect();
        let (basis, pinv) = compute(&config, cycle, &seeds)?;
        Ok(Self {
            config,
            seeds: None,
            basis,
            pinv,
        })
    }

    /// Operators for a subset of seeds. Duplicates are dropped.
    pub fn build_for(config: BlockConfig, cycle: &CycleCache, seeds: &[u32]) -> Result<Self> {
        check_lengths(&config, cycle)?;
        let mut seeds = seeds.to_vec();
        seeds.sort_unstable();
        seeds.dedup();
        for &s in &seeds {
            cycle.spec().check_seed(s)?;
        }
        let (basis, pinv) = compute(&config, cycle, &seeds)?;
        let full = seeds.len() == cycle.len();
        Ok(Self {
            config,
            seeds: (!full).then_some(seeds),
            basis,
            pinv,
        })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.basis.len() / self.matrix_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether every seed of the register is present.
    pub fn is_complete(&self) -> bool {
        self.seeds.is_none()
    }

    fn matrix_len(&self) -> usize {
        self.config.block_size() * self.config.latent_dim()
    }

    /// Cached seeds in ascending order.
    pub fn seeds(&self) -> Box<dyn Iterator<Item = u32> + '_> {
        match &self.seeds {
            Some(list) => Box::new(list.iter().copied()),
            None => Box::new(1..=self.len() as u32),
        }
    }

    pub(crate) fn index_of(&self, seed: u32) -> Option<usize> {
        match &self.seeds {
            Some(list) => list.binary_search(&seed).ok(),
            None => (seed >= 1 && seed as usize <= self.len()).then(|| seed as usize - 1),
        }
    }

    pub(crate) fn seed_at(&self, index: usize) -> u32 {
        match &self.seeds {
            Some(list) => list[index],
            None => index as u32 + 1,
        }
    }

    pub(crate) fn basis_at(&self, index: usize) -> &[f64] {
        let n = self.matrix_len();
        &self.basis[index * n..(index + 1) * n]
    }

    pub(crate) fn pinv_at(&self, index: usize) -> &[f64] {
        let n = self.matrix_len();
        &self.pinv[index * n..(index + 1) * n]
    }

    /// `U(seed)`, `C x P` row-major.
    pub fn basis(&self, seed: u32) -> Result<&[f64]> {
        let i = self.index_of(seed).ok_or(Error::SeedNotCached { seed })?;
        Ok(self.basis_at(i))
    }

    /// `U(seed)†`, `P x C` row-major.
    pub fn operator(&self, seed: u32) -> Result<&[f64]> {
        let i = self.index_of(seed).ok_or(Error::SeedNotCached { seed })?;
        Ok(self.pinv_at(i))
    }

    /// Storage the operators would take at `bytes_per_entry` bytes per value.
    pub fn operator_storage_bytes(&self, bytes_per_entry: usize) -> usize {
        self.pinv.len() * bytes_per_entry
    }
}

fn check_lengths(config: &BlockConfig, cycle: &CycleCache) -> Result<()> {
    if config.seed_bits() != cycle.spec().k() {
        return Err(Error::InvalidConfig(format!(
            "config uses K={} but the cycle cache has k={}",
            config.seed_bits(),
            cycle.spec().k()
        )));
    }
    Ok(())
}

fn compute(config: &BlockConfig, cycle: &CycleCache, seeds: &[u32]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, p) = (config.block_size(), config.latent_dim());
    let per_seed: Vec<(Vec<f64>, Vec<f64>)> = seeds
        .par_iter()
        .map(|&seed| {
            let u = cycle.normalized_matrix(seed, c, p)?;
            let pinv = pseudo_inverse(&u, c, p);
            Ok((u, pinv))
        })
        .collect::<Result<_>>()?;
    let mut basis = Vec::with_capacity(seeds.len() * c * p);
    let mut pinv = Vec::with_capacity(seeds.len() * c * p);
    for (u, v) in per_seed {
        basis.extend_from_slice(&u);
        pinv.extend_from_slice(&v);
    }
    Ok((basis, pinv))
}

/// Minimum-norm least-squares operator of a row-major `rows x cols` matrix,
/// returned row-major `cols x rows`.
pub fn pseudo_inverse(u: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, u);
    let svd = m.svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = RANK_TOLERANCE * largest;
    let pinv = match svd.pseudo_inverse(tol.max(f64::MIN_POSITIVE)) {
        Ok(m) => m,
        // Only reachable if U/V were not computed, which they always are.
        Err(_) => DMatrix::zeros(cols, rows),
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..cols {
        for c in 0..rows {
            out.push(pinv[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = (0..k).map(|l| a[i * k + l] * b[l * m + j]).sum();
            }
        }
        out
    }

    #[test]
    fn small_config_has_one_operator_per_seed() {
        let cycle = CycleCache::for_length(3).unwrap();
        let config = BlockConfig::new(4, 2, 3).unwrap();
        let cache = PseudoInverseCache::build(config, &cycle).unwrap();
        assert_eq!(cache.len(), 7);
        assert!(cache.is_complete());
        assert_eq!(cache.operator(5).unwrap().len(), 8);
        assert!(cache.operator(0).is_err());
        assert!(cache.operator(8).is_err());
    }

    #[test]
    fn moore_penrose_identities_hold() {
        let cycle = CycleCache::for_length(3).unwrap();
        let config = BlockConfig::new(4, 2, 3).unwrap();
        let cache = PseudoInverseCache::build(config, &cycle).unwrap();
        for seed in cache.seeds() {
            let u = cache.basis(seed).unwrap();
            let v = cache.operator(seed).unwrap();
            let uvu = matmul(&matmul(u, v, 4, 2, 4), u, 4, 4, 2);
            for (a, b) in uvu.iter().zip(u) {
                assert!((a - b).abs() < 1e-12, "seed {seed}");
            }
        }
    }

    #[test]
    fn left_inverse_for_full_rank() {
        let cycle = CycleCache::for_length(16).unwrap();
        let config = BlockConfig::M4;
        let seeds = [1, 2, 4097, 40000, 65535];
        let cache = PseudoInverseCache::build_for(config, &cycle, &seeds).unwrap();
        assert_eq!(cache.len(), 5);
        for seed in seeds {
            let vu = matmul(cache.operator(seed).unwrap(), cache.basis(seed).unwrap(), 3, 8, 3);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((vu[i * 3 + j] - want).abs() < 1e-10);
                }
            }
        }
        assert!(cache.operator(3).is_err());
    }

    #[test]
    fn rank_deficient_matrix_gets_minimum_norm_inverse() {
        // Two identical columns: rank 1.
        let u = [1.0, 1.0, 2.0, 2.0, -1.0, -1.0];
        let v = pseudo_inverse(&u, 3, 2);
        // pinv of [a a] is [a a]^T / (2 |a|^2)
        let norm = 1.0 + 4.0 + 1.0;
        let want = [1.0, 2.0, -1.0, 1.0, 2.0, -1.0].map(|x| x / (2.0 * norm));
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = pseudo_inverse(&[0.0; 6], 3, 2);
        assert!(zero.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn mismatched_k_rejected() {
        let cycle = CycleCache::for_length(3).unwrap();
        assert!(PseudoInverseCache::build(BlockConfig::M4, &cycle).is_err());
    }
}
