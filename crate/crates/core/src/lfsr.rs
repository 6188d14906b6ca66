//! Fibonacci-style linear feedback shift registers and the state-cycle cache
//! used to expand a seed into a pseudo-random basis matrix.
//!
//! A `k`-bit state is held in the low bits of a `u32`. Bit `k - 1` (MSB) is the
//! newest bit and bit 0 (LSB) is the oldest. Each step XORs the state bits at
//! the tap indices, shifts the register right by one and inserts the feedback
//! bit at the MSB:
//!
//! ```text
//!   k=3, taps {0, 1}
//!   4 -> 2 -> 5 -> 6 -> 7 -> 3 -> 1 -> 4
//! ```
//!
//! Matrices are filled row-major from the states that *follow* the seed; the
//! seed itself is never part of its own matrix.

use crate::error::{Error, Result};

/// Feedback tap indices per register length, indexed from the oldest bit.
/// Every row is a maximal-length configuration.
pub const TAP_TABLE: [(u32, &[u32]); 23] = [
    (2, &[0, 1]),
    (3, &[0, 1]),
    (4, &[0, 1]),
    (5, &[0, 2]),
    (6, &[0, 1]),
    (7, &[0, 1]),
    (8, &[0, 2, 3, 4]),
    (9, &[0, 4]),
    (10, &[0, 3]),
    (11, &[0, 2]),
    (12, &[0, 1, 2, 8]),
    (13, &[0, 1, 2, 5]),
    (14, &[0, 1, 2, 12]),
    (15, &[0, 1]),
    (16, &[0, 1, 3, 12]),
    (17, &[0, 3]),
    (18, &[0, 7]),
    (19, &[0, 1, 2, 5]),
    (20, &[0, 3]),
    (21, &[0, 2]),
    (22, &[0, 1]),
    (23, &[0, 5]),
    (24, &[0, 1, 2, 7]),
];

pub const MIN_LENGTH: u32 = 2;
pub const MAX_LENGTH: u32 = 24;

/// Register length plus feedback taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrSpec {
    k: u32,
    tap_mask: u32,
}

impl LfsrSpec {
    /// Spec for the tabulated maximal-length register of length `k`.
    pub fn new(k: u32) -> Result<Self> {
        let taps = TAP_TABLE
            .iter()
            .find(|(len, _)| *len == k)
            .map(|(_, taps)| *taps)
            .ok_or(Error::UnsupportedLength(k))?;
        Self::with_taps(k, taps)
    }

    /// Arbitrary tap set. Nothing guarantees the result is maximal-length;
    /// [`CycleCache::build`] checks that.
    pub fn with_taps(k: u32, taps: &[u32]) -> Result<Self> {
        if !(MIN_LENGTH..=MAX_LENGTH).contains(&k) {
            return Err(Error::UnsupportedLength(k));
        }
        let mut tap_mask = 0u32;
        for &j in taps {
            if j >= k {
                return Err(Error::InvalidConfig(format!(
                    "tap index {j} out of range for k={k}"
                )));
            }
            tap_mask |= 1 << j;
        }
        Ok(Self { k, tap_mask })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn taps(&self) -> Vec<u32> {
        (0..self.k).filter(|j| self.tap_mask & (1 << j) != 0).collect()
    }

    /// Number of nonzero states, `2^k - 1`.
    pub fn period(&self) -> u32 {
        (1u32 << self.k) - 1
    }

    /// One register step. Zero is absorbing.
    #[inline]
    pub fn next_state(&self, state: u32) -> u32 {
        debug_assert!(state >> self.k == 0, "state wider than k bits");
        let feedback = (state & self.tap_mask).count_ones() & 1;
        (state >> 1) | (feedback << (self.k - 1))
    }

    /// Steps taken from `seed` until the register first returns to it.
    /// Returns `None` for the zero seed, or when the orbit never returns
    /// within `2^k` steps.
    pub fn cycle_length(&self, seed: u32) -> Option<u64> {
        if seed == 0 {
            return None;
        }
        let mut state = seed;
        for step in 1..=(1u64 << self.k) {
            state = self.next_state(state);
            if state == seed {
                return Some(step);
            }
        }
        None
    }

    /// Maps a raw state onto `[-1, 1]`: `(v - 2^(k-1)) / (2^(k-1) - 1)`.
    #[inline]
    pub fn normalize(&self, value: u32) -> f64 {
        let half = f64::from(1u32 << (self.k - 1));
        (f64::from(value) - half) / (half - 1.0)
    }

    pub fn check_seed(&self, seed: u32) -> Result<()> {
        if seed == 0 || seed > self.period() {
            return Err(Error::InvalidSeed {
                seed,
                max: self.period(),
            });
        }
        Ok(())
    }
}

/// Every nonzero state of one maximal-length register, stored in cycle order
/// starting from state 1, with a reverse index for O(1) seed lookups.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct CycleCache {
    spec: LfsrSpec,
    order: Vec<u32>,
    position: Vec<u32>,
}

impl CycleCache {
    /// Walks the full cycle from state 1. Fails if the register returns to 1
    /// before visiting all `2^k - 1` nonzero states.
    pub fn build(spec: LfsrSpec) -> Result<Self> {
        let period = spec.period() as usize;
        let mut order = Vec::with_capacity(period);
        let mut position = vec![u32::MAX; period + 1];
        let mut state = 1u32;
        loop {
            if position[state as usize] != u32::MAX {
                break;
            }
            position[state as usize] = order.len() as u32;
            order.push(state);
            state = spec.next_state(state);
            if state == 0 {
                break;
            }
        }
        if order.len() != period || state != 1 {
            return Err(Error::NotMaximalLength {
                k: spec.k,
                period: order.len() as u64,
                expected: period as u64,
            });
        }
        Ok(Self {
            spec,
            order,
            position,
        })
    }

    /// Convenience for `build(LfsrSpec::new(k)?)`.
    pub fn for_length(k: u32) -> Result<Self> {
        Self::build(LfsrSpec::new(k)?)
    }

    pub fn spec(&self) -> &LfsrSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Cached successor of a nonzero state.
    pub fn successor(&self, state: u32) -> Result<u32> {
        self.spec.check_seed(state)?;
        let pos = self.position[state as usize] as usize;
        Ok(self.order[(pos + 1) % self.order.len()])
    }

    /// Infinite iterator over the states strictly after `seed`.
    pub fn states_after(&self, seed: u32) -> Result<impl Iterator<Item = u32> + '_> {
        self.spec.check_seed(seed)?;
        let start = self.position[seed as usize] as usize + 1;
        Ok(self.order.iter().copied().cycle().skip(start))
    }

    /// The full cycle beginning at `seed` (seed included), one lap.
    pub fn cycle_from(&self, seed: u32) -> Result<Vec<u32>> {
        self.spec.check_seed(seed)?;
        let start = self.position[seed as usize] as usize;
        Ok(self.order[start..]
            .iter()
            .chain(&self.order[..start])
            .copied()
            .collect())
    }

    /// Integer matrix `V(seed)`, `rows x cols`, row-major.
    pub fn raw_matrix(&self, seed: u32, rows: usize, cols: usize) -> Result<Vec<u32>> {
        Ok(self.states_after(seed)?.take(rows * cols).collect())
    }

    /// Normalized matrix `U(seed)`, `rows x cols`, row-major, entries in `[-1, 1]`.
    pub fn normalized_matrix(&self, seed: u32, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; rows * cols];
        self.fill_normalized(seed, &mut out)?;
        Ok(out)
    }

    /// Writes `U(seed)` row-major into `out`; the shape is implied by the caller.
    pub fn fill_normalized(&self, seed: u32, out: &mut [f64]) -> Result<()> {
        for (slot, v) in out.iter_mut().zip(self.states_after(seed)?) {
            *slot = self.spec.normalize(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> LfsrSpec {
        LfsrSpec::new(3).unwrap()
    }

    #[test]
    fn next_state_matches_three_bit_cycle() {
        let spec = k3();
        assert_eq!(spec.next_state(4), 2);
        assert_eq!(spec.next_state(1), 4);
        assert_eq!(spec.next_state(7), 3);
        assert_eq!(spec.next_state(0), 0);
    }

    #[test]
    fn zero_is_absorbing_for_every_length() {
        for k in MIN_LENGTH..=MAX_LENGTH {
            assert_eq!(LfsrSpec::new(k).unwrap().next_state(0), 0);
        }
    }

    #[test]
    fn taps_round_trip_through_mask() {
        assert_eq!(LfsrSpec::new(16).unwrap().taps(), vec![0, 1, 3, 12]);
        assert_eq!(k3().taps(), vec![0, 1]);
    }

    #[test]
    fn cycle_order_from_four() {
        let cache = CycleCache::build(k3()).unwrap();
        assert_eq!(cache.cycle_from(4).unwrap(), vec![4, 2, 5, 6, 7, 3, 1]);
    }

    #[test]
    fn two_bit_register_has_period_three() {
        // 1 -> 0b10 -> 0b11 -> 0b01, worked by hand with taps {0, 1}.
        let spec = LfsrSpec::new(2).unwrap();
        assert_eq!(spec.next_state(1), 2);
        assert_eq!(spec.next_state(2), 3);
        assert_eq!(spec.next_state(3), 1);
        let cache = CycleCache::build(spec).unwrap();
        assert_eq!(cache.len(), 3);
    }

    #[test]
    fn sixteen_bit_cache_size() {
        let cache = CycleCache::for_length(16).unwrap();
        assert_eq!(cache.len(), 65535);
    }

    #[test]
    fn raw_matrix_examples() {
        let cache = CycleCache::build(k3()).unwrap();
        assert_eq!(
            cache.raw_matrix(4, 4, 2).unwrap(),
            vec![2, 5, 6, 7, 3, 1, 4, 2]
        );
        assert_eq!(cache.raw_matrix(1, 1, 1).unwrap(), vec![4]);
    }

    #[test]
    fn raw_matrix_wraps_around_cycle() {
        let cache = CycleCache::build(k3()).unwrap();
        let m = cache.raw_matrix(4, 7, 2).unwrap();
        // 14 successive states after seed 4, walked on the cycle by hand.
        assert_eq!(m, vec![2, 5, 6, 7, 3, 1, 4, 2, 5, 6, 7, 3, 1, 4]);
        assert_eq!(m[7], m[0]);
    }

    #[test]
    fn zero_seed_rejected() {
        let cache = CycleCache::build(k3()).unwrap();
        assert!(matches!(
            cache.raw_matrix(0, 1, 1),
            Err(Error::InvalidSeed { seed: 0, .. })
        ));
        assert!(cache.raw_matrix(8, 1, 1).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        let spec = k3();
        assert_eq!(spec.normalize(4), 0.0);
        assert_eq!(spec.normalize(7), 1.0);
        assert_eq!(spec.normalize(1), -1.0);
    }

    #[test]
    fn normalized_matrix_for_seed_four() {
        let cache = CycleCache::build(k3()).unwrap();
        let u = cache.normalized_matrix(4, 4, 2).unwrap();
        let expected = [
            -2.0 / 3.0,
            1.0 / 3.0,
            2.0 / 3.0,
            1.0,
            -1.0 / 3.0,
            -1.0,
            0.0,
            -2.0 / 3.0,
        ];
        for (a, b) in u.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn non_maximal_taps_are_detected() {
        // x^4 + x^2 + 1 style feedback splits the 4-bit states into short cycles.
        let spec = LfsrSpec::with_taps(4, &[0, 2]).unwrap();
        match CycleCache::build(spec) {
            Err(Error::NotMaximalLength { k: 4, period, .. }) => assert!(period < 15),
            other => panic!("expected NotMaximalLength, got {other:?}"),
        }
    }

    #[test]
    fn cache_agrees_with_next_state() {
        for k in [2, 5, 8, 12] {
            let cache = CycleCache::for_length(k).unwrap();
            let spec = *cache.spec();
            for s in 1..=spec.period() {
                assert_eq!(cache.successor(s).unwrap(), spec.next_state(s));
            }
        }
    }

    #[test]
    fn unsupported_lengths() {
        assert!(LfsrSpec::new(1).is_err());
        assert!(LfsrSpec::new(25).is_err());
        assert!(LfsrSpec::with_taps(4, &[4]).is_err());
    }
}
