//! Grid search over block geometries for a fixed bit budget.
//!
//! Every configuration with `k + 4 + 4p = m * c` is scored by compressing
//! standard-Gaussian blocks drawn from a seeded generator and measuring the
//! ratio `E[err] / E[|w|^2]` of the best seed's error to the block energy.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::codec::{compress_block, Candidates, PseudoInverseCache, SearchOptions};
use crate::config::{BlockConfig, Budget};
use crate::error::{Error, Result};
use crate::lfsr::{CycleCache, MAX_LENGTH, MIN_LENGTH};

/// Above this register length only every `2^(k - 16)`-th seed is searched.
pub const EXHAUSTIVE_MAX_K: u32 = 16;

pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    pub max_c: usize,
    pub max_k: u32,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self { max_c: 12, max_k: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub config: BlockConfig,
    pub trials: usize,
    /// Estimate of `E[err_min] / E[|w|^2]`.
    pub mean_relative_error: f64,
    /// Delta-method standard error of the ratio estimate.
    pub std_error: f64,
}

/// All `(c, p, k)` with `k + 4 + 4p = m * c`, `1 <= p < c`, `2 <= k <= max_k`
/// and `c <= max_c`, ordered by `c`, then `p`.
pub fn enumerate_configs(m: Budget, limits: SearchLimits) -> Result<Vec<BlockConfig>> {
    if *m.numer() == 0 {
        return Err(Error::InvalidConfig("bit budget must be positive".into()));
    }
    if limits.max_k > MAX_LENGTH {
        return Err(Error::InvalidConfig(format!(
            "max K {} exceeds the largest tabulated register ({MAX_LENGTH})",
            limits.max_k
        )));
    }
    let mut out = Vec::new();
    for c in 2..=limits.max_c {
        let total = m * Budget::from_integer(c as u32);
        if !total.is_integer() {
            continue;
        }
        let total = total.to_integer() as i64;
        for p in 1..c {
            let k = total - 4 - 4 * p as i64;
            if k >= i64::from(MIN_LENGTH) && k <= i64::from(limits.max_k) {
                out.push(BlockConfig::new(c, p, k as u32)?);
            }
        }
    }
    Ok(out)
}

/// The seeds searched for a register of length `k`: all of them up to
/// [`EXHAUSTIVE_MAX_K`], a fixed stride beyond.
pub fn default_candidates(k: u32) -> Candidates {
    if k <= EXHAUSTIVE_MAX_K {
        Candidates::All
    } else {
        Candidates::Stride(1 << (k - EXHAUSTIVE_MAX_K))
    }
}

fn candidate_seeds(k: u32, candidates: &Candidates) -> Vec<u32> {
    let max = (1u32 << k) - 1;
    match candidates {
        Candidates::All => (1..=max).collect(),
        Candidates::Stride(n) => (1..=max).step_by((*n).max(1) as usize).collect(),
        Candidates::List(list) => list.clone(),
    }
}

/// `trials` standard-Gaussian vectors of length `c`, reproducible from `rng_seed`.
pub fn gaussian_blocks(c: usize, trials: usize, rng_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..trials)
        .map(|_| (0..c).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Per-block minimum errors for an explicit set of blocks.
pub fn block_errors(
    blocks: &[Vec<f64>],
    cache: &PseudoInverseCache,
    options: &SearchOptions,
) -> Result<Vec<f64>> {
    blocks
        .par_iter()
        .map(|w| compress_block(w, cache, options).map(|(_, err)| err))
        .collect()
}

/// Ratio-of-means estimate and its standard error from per-block errors and
/// energies.
pub fn summarize(config: BlockConfig, errors: &[f64], energies: &[f64]) -> DesignPoint {
    let t = errors.len();
    let mean_err = errors.iter().sum::<f64>() / t as f64;
    let mean_energy = energies.iter().sum::<f64>() / t as f64;
    let ratio = if mean_energy > 0.0 { mean_err / mean_energy } else { 0.0 };
    let std_error = if t > 1 && mean_energy > 0.0 {
        let ss: f64 = errors
            .iter()
            .zip(energies)
            .map(|(e, n)| (e - ratio * n).powi(2))
            .sum();
        (ss / (t as f64 * (t as f64 - 1.0))).sqrt() / mean_energy
    } else {
        0.0
    };
    DesignPoint {
        config,
        trials: t,
        mean_relative_error: ratio,
        std_error,
    }
}

/// Scores `blocks` against an already built cache.
pub fn evaluate_blocks(
    blocks: &[Vec<f64>],
    cache: &PseudoInverseCache,
    options: &SearchOptions,
) -> Result<DesignPoint> {
    if blocks.is_empty() {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    let errors = block_errors(blocks, cache, options)?;
    let energies: Vec<f64> = blocks.iter().map(|w| w.iter().map(|x| x * x).sum()).collect();
    Ok(summarize(*cache.config(), &errors, &energies))
}

/// Scores one configuration on `trials` Gaussian blocks.
pub fn evaluate_config(config: BlockConfig, trials: usize, rng_seed: u64) -> Result<DesignPoint> {
    let cycle = CycleCache::for_length(config.seed_bits())?;
    evaluate_with_cycle(config, &cycle, trials, rng_seed)
}

fn evaluate_with_cycle(
    config: BlockConfig,
    cycle: &CycleCache,
    trials: usize,
    rng_seed: u64,
) -> Result<DesignPoint> {
    let candidates = default_candidates(config.seed_bits());
    let cache = match candidates {
        Candidates::All => PseudoInverseCache::build(config, cycle)?,
        ref other => {
            PseudoInverseCache::build_for(config, cycle, &candidate_seeds(config.seed_bits(), other))?
        }
    };
    let blocks = gaussian_blocks(config.block_size(), trials, rng_seed);
    evaluate_blocks(&blocks, &cache, &SearchOptions::default())
}

/// Evaluates every enumerated configuration on the same rng seed and ranks
/// them by ascending error. `progress` sees each point as it completes.
pub fn search_with<F>(
    m: Budget,
    limits: SearchLimits,
    trials: usize,
    rng_seed: u64,
    mut progress: F,
) -> Result<Vec<DesignPoint>>
where
    F: FnMut(&DesignPoint),
{
    let configs = enumerate_configs(m, limits)?;
    let mut cycles: HashMap<u32, CycleCache> = HashMap::new();
    let mut points = Vec::with_capacity(configs.len());
    for config in configs {
        let k = config.seed_bits();
        if let std::collections::hash_map::Entry::Vacant(e) = cycles.entry(k) {
            e.insert(CycleCache::for_length(k)?);
        }
        let point = evaluate_with_cycle(config, &cycles[&k], trials, rng_seed)?;
        progress(&point);
        points.push(point);
    }
    rank(&mut points);
    Ok(points)
}

pub fn search(m: Budget, limits: SearchLimits, trials: usize, rng_seed: u64) -> Result<Vec<DesignPoint>> {
    search_with(m, limits, trials, rng_seed, |_| {})
}

/// Ascending by error; ties keep configuration order.
pub fn rank(points: &mut [DesignPoint]) {
    points.sort_by(|a, b| {
        a.mean_relative_error
            .total_cmp(&b.mean_relative_error)
            .then_with(|| a.config.cmp(&b.config))
    });
}

pub const CSV_HEADER: &str = "C,P,K,M,trials,mean_rel_err,std_err";

pub fn to_csv(points: &[DesignPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9e},{:.9e}",
            p.config.block_size(),
            p.config.latent_dim(),
            p.config.seed_bits(),
            p.config.bits_per_element(),
            p.trials,
            p.mean_relative_error,
            p.std_error
        );
    }
    out
}

/// Human-readable ranking.
pub fn format_ranking(points: &[DesignPoint]) -> String {
    let mut out = String::new();
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>3}. C={:<3} P={:<3} K={:<3} rel_err={:.6} +/- {:.6} ({} trials)",
            i + 1,
            p.config.block_size(),
            p.config.latent_dim(),
            p.config.seed_bits(),
            p.mean_relative_error,
            p.std_error,
            p.trials
        );
    }
    out
}
