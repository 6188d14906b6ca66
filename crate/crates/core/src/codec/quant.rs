//! 4-bit two's-complement coefficients sharing one 4-bit power-of-two exponent.

use crate::error::{Error, Result};

pub const Q_MIN: i8 = -8;
pub const Q_MAX: i8 = 7;
pub const E_MIN: i8 = -8;
pub const E_MAX: i8 = 7;

/// How the shared exponent is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExponentRule {
    /// Try all 16 exponents and keep the one with the smallest squared
    /// round-trip error; ties go to the smallest exponent.
    #[default]
    Search,
    /// `e = max_i floor(log2 |t_i|)`, clamped to the exponent range.
    MaxLog2,
}

/// `P` mantissas `q_i` in `[-8, 7]` and a shared exponent `e` in `[-8, 7]`;
/// element `i` decodes to `q_i * 2^e`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedCoefficients {
    pub q: Vec<i8>,
    pub e: i8,
}

impl QuantizedCoefficients {
    pub fn zero(p: usize) -> Self {
        Self { q: vec![0; p], e: E_MIN }
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|&q| q == 0)
    }

    pub fn is_valid(&self) -> bool {
        (E_MIN..=E_MAX).contains(&self.e) && self.q.iter().all(|q| (Q_MIN..=Q_MAX).contains(q))
    }
}

#[inline]
pub(crate) fn pow2(e: i8) -> f64 {
    f64::powi(2.0, i32::from(e))
}

#[inline]
fn quantize_at(t: f64, inv_scale: f64) -> i8 {
    (t * inv_scale)
        .round_ties_even()
        .clamp(f64::from(Q_MIN), f64::from(Q_MAX)) as i8
}

/// Quantizes `t` into `q` without allocating; returns the exponent.
/// Inputs must be finite.
pub(crate) fn quantize_into(t: &[f64], q: &mut [i8], rule: ExponentRule) -> i8 {
    debug_assert_eq!(t.len(), q.len());
    match rule {
        ExponentRule::Search => quantize_search(t, q),
        ExponentRule::MaxLog2 => quantize_max_log2(t, q),
    }
}

/// Whether no element saturates at exponent `e`.
#[inline]
fn fits(t: &[f64], e: i8) -> bool {
    let inv = pow2(-e);
    t.iter().all(|&x| {
        let r = (x * inv).round_ties_even();
        r >= f64::from(Q_MIN) && r <= f64::from(Q_MAX)
    })
}

/// Smallest exponent at which nothing saturates, or `E_MAX` if none.
fn smallest_fitting_exponent(t: &[f64]) -> i8 {
    let peak = t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return E_MIN;
    }
    let mut e = (peak.log2().floor() as i32 - 2).clamp(i32::from(E_MIN), i32::from(E_MAX)) as i8;
    while e < E_MAX && !fits(t, e) {
        e += 1;
    }
    while e > E_MIN && fits(t, e - 1) {
        e -= 1;
    }
    e
}

fn quantize_search(t: &[f64], q: &mut [i8]) -> i8 {
    let mut best_err = f64::INFINITY;
    let mut best_e = E_MIN;
    // Above the smallest non-saturating exponent the grids are nested, so the
    // error can only grow. Below it, scan downwards: the saturation penalty is
    // a lower bound that only grows as e shrinks, so the scan can stop early.
    // `<=` keeps the smallest exponent among ties.
    let start = smallest_fitting_exponent(t);
    for e in (E_MIN..=start).rev() {
        let scale = pow2(e);
        let hi = f64::from(Q_MAX) * scale;
        let lo = f64::from(Q_MIN) * scale;
        let floor: f64 = t
            .iter()
            .map(|&x| {
                if x > hi {
                    (x - hi) * (x - hi)
                } else if x < lo {
                    (x - lo) * (x - lo)
                } else {
                    0.0
                }
            })
            .sum();
        if floor > best_err {
            break;
        }
        let inv = pow2(-e);
        let err: f64 = t
            .iter()
            .map(|&x| {
                let d = x - f64::from(quantize_at(x, inv)) * scale;
                d * d
            })
            .sum();
        if err <= best_err {
            best_err = err;
            best_e = e;
        }
    }
    let inv = pow2(-best_e);
    for (slot, &x) in q.iter_mut().zip(t) {
        *slot = quantize_at(x, inv);
    }
    best_e
}

fn quantize_max_log2(t: &[f64], q: &mut [i8]) -> i8 {
    let e = t
        .iter()
        .filter(|x| **x != 0.0)
        .map(|x| x.abs().log2().floor())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .map_or(E_MIN, |v| v.clamp(f64::from(E_MIN), f64::from(E_MAX)) as i8);
    let inv = pow2(-e);
    for (slot, &x) in q.iter_mut().zip(t) {
        *slot = quantize_at(x, inv);
    }
    e
}

pub fn quantize_coefficients(t: &[f64]) -> Result<QuantizedCoefficients> {
    quantize_with(t, ExponentRule::Search)
}

pub fn quantize_with(t: &[f64], rule: ExponentRule) -> Result<QuantizedCoefficients> {
    if let Some(index) = t.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut q = vec![0; t.len()];
    let e = quantize_into(t, &mut q, rule);
    Ok(QuantizedCoefficients { q, e })
}

/// Exact dyadic decode.
pub fn dequantize(coeffs: &QuantizedCoefficients) -> Vec<f64> {
    let scale = pow2(coeffs.e);
    coeffs.q.iter().map(|&q| f64::from(q) * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain 16-way scan, smallest exponent wins ties.
    fn brute_force(t: &[f64]) -> (Vec<i8>, i8, f64) {
        let mut best: Option<(Vec<i8>, i8, f64)> = None;
        for e in -8i8..=7 {
            let s = 2f64.powi(e as i32);
            let q: Vec<i8> = t
                .iter()
                .map(|x| (x / s).round_ties_even().clamp(-8.0, 7.0) as i8)
                .collect();
            let err: f64 = t
                .iter()
                .zip(&q)
                .map(|(x, &qi)| (x - qi as f64 * s).powi(2))
                .sum();
            if best.as_ref().map_or(true, |b| err < b.2) {
                best = Some((q, e, err));
            }
        }
        best.unwrap()
    }

    #[test]
    fn zero_vector() {
        let c = quantize_coefficients(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c, QuantizedCoefficients { q: vec![0, 0, 0], e: -8 });
    }

    #[test]
    fn exact_integers() {
        let c = quantize_coefficients(&[7.0, -8.0, 1.0]).unwrap();
        assert_eq!(c, QuantizedCoefficients { q: vec![7, -8, 1], e: 0 });
    }

    #[test]
    fn dyadic_fractions_match_brute_force() {
        let t = [0.5, -0.25, 0.125];
        let c = quantize_coefficients(&t).unwrap();
        let (q, e, err) = brute_force(&t);
        assert_eq!((c.q.clone(), c.e), (q, e));
        assert_eq!(err, 0.0);
        assert_eq!(dequantize(&c), t.to_vec());
    }

    #[test]
    fn dequantize_range_endpoints() {
        assert_eq!(dequantize(&QuantizedCoefficients { q: vec![7], e: 7 }), vec![896.0]);
        assert_eq!(
            dequantize(&QuantizedCoefficients { q: vec![-8], e: -8 }),
            vec![-0.03125]
        );
        assert_eq!(dequantize(&QuantizedCoefficients::zero(3)), vec![0.0; 3]);
    }

    #[test]
    fn saturates_beyond_range() {
        let c = quantize_coefficients(&[5000.0, -5000.0]).unwrap();
        assert_eq!(c, QuantizedCoefficients { q: vec![7, -8], e: 7 });
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            quantize_coefficients(&[1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(quantize_coefficients(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn literal_rule_uses_max_floor_log2() {
        let c = quantize_with(&[3.0, -0.5, 1.0], ExponentRule::MaxLog2).unwrap();
        assert_eq!(c.e, 1);
        // 3/2 = 1.5 -> 2 (half to even), -0.25 -> 0, 0.5 -> 0
        assert_eq!(c.q, vec![2, 0, 0]);
        let z = quantize_with(&[0.0, 0.0], ExponentRule::MaxLog2).unwrap();
        assert_eq!(z, QuantizedCoefficients::zero(2));
    }

    #[test]
    fn rounding_is_half_to_even() {
        let c = quantize_with(&[2.5, 0.5, 7.0], ExponentRule::MaxLog2).unwrap();
        assert_eq!(c.e, 2);
        // 2.5/4 = 0.625 -> 1, 0.5/4 = 0.125 -> 0, 7/4 = 1.75 -> 2
        assert_eq!(c.q, vec![1, 0, 2]);
        let mut q = [0i8; 2];
        quantize_into(&[0.5, 1.5], &mut q, ExponentRule::MaxLog2);
        // e = 0: 0.5 -> 0, 1.5 -> 2
        assert_eq!(q, [0, 2]);
    }

    proptest! {
        #[test]
        fn search_matches_exhaustive_scan(t in prop::collection::vec(-2000.0f64..2000.0, 1..8),
                                          scale in -12i32..4) {
            let t: Vec<f64> = t.iter().map(|x| x * 2f64.powi(scale)).collect();
            let c = quantize_coefficients(&t).unwrap();
            let (q, e, _) = brute_force(&t);
            prop_assert_eq!(c.q, q);
            prop_assert_eq!(c.e, e);
        }

        #[test]
        fn search_matches_exhaustive_scan_on_half_steps(
            halves in prop::collection::vec(-40i32..40, 1..6),
            e in -10i32..9,
        ) {
            // Odd multiples of 2^(e-1) sit exactly on rounding and saturation edges.
            let t: Vec<f64> = halves.iter().map(|h| (*h as f64 + 0.5) * 2f64.powi(e)).collect();
            let c = quantize_coefficients(&t).unwrap();
            let (q, e, _) = brute_force(&t);
            prop_assert_eq!(c.q, q);
            prop_assert_eq!(c.e, e);
        }

        #[test]
        fn search_never_worse_than_literal_rule(t in prop::collection::vec(-50.0f64..50.0, 1..8)) {
            let err = |c: &QuantizedCoefficients| -> f64 {
                dequantize(c).iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum()
            };
            let s = quantize_with(&t, ExponentRule::Search).unwrap();
            let l = quantize_with(&t, ExponentRule::MaxLog2).unwrap();
            prop_assert!(err(&s) <= err(&l));
        }

        #[test]
        fn representable_vectors_round_trip(q in prop::collection::vec(-8i8..=7, 1..8), e in -8i8..=7) {
            let coeffs = QuantizedCoefficients { q, e };
            let t = dequantize(&coeffs);
            let back = quantize_coefficients(&t).unwrap();
            prop_assert_eq!(dequantize(&back), t);
            prop_assert!(back.is_valid());
        }
    }
}
