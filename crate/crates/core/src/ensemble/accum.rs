//! Exact, order-independent summation of `f64` values.
//!
//! Every addend is converted to a 256-bit two's-complement fixed-point number
//! with 96 fractional bits and added with integer arithmetic, so the sum is
//! independent of the order in which values and partial sums are combined.
//! Addends below `2^-96` in magnitude are truncated toward zero; that
//! truncation depends on the addend alone, never on the running total.

use serde::{Deserialize, Serialize};

const FRAC_BITS: i32 = 96;
const LIMBS: usize = 4;
/// Addends must stay below `2^104` in magnitude (`2^200` as fixed-point
/// integers); the 256-bit total then cannot overflow before `2^55` additions.
const MAX_BIT: i32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ExactSum {
    limbs: [u64; LIMBS],
    /// Set once a non-finite or out-of-range value was added; the sum is then
    /// meaningless and [`ExactSum::value`] returns NaN.
    poisoned: bool,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(limbs: [u64; LIMBS], poisoned: bool) -> Self {
        Self { limbs, poisoned }
    }

    pub fn limbs(&self) -> [u64; LIMBS] {
        self.limbs
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn add(&mut self, x: f64) {
        match to_fixed(x) {
            Some(v) => self.add_limbs(&v),
            None => self.poisoned = true,
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        self.add_limbs(&other.limbs);
        self.poisoned |= other.poisoned;
    }

    fn add_limbs(&mut self, v: &[u64; LIMBS]) {
        let mut carry = false;
        for (a, &b) in self.limbs.iter_mut().zip(v) {
            let (s1, c1) = a.overflowing_add(b);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            *a = s2;
            carry = c1 || c2;
        }
    }

    /// The sum rounded to the nearest `f64`.
    pub fn value(&self) -> f64 {
        if self.poisoned {
            return f64::NAN;
        }
        let negative = (self.limbs[LIMBS - 1] as i64) < 0;
        let mag = if negative { negate(&self.limbs) } else { self.limbs };
        let top = match (0..LIMBS).rev().find(|&i| mag[i] != 0) {
            Some(i) => i,
            None => return 0.0,
        };
        // Highest set bit, counted from bit 0 of limb 0.
        let msb = 64 * top as i32 + 63 - mag[top].leading_zeros() as i32;
        // Take the 64 bits from the msb down, folding every lower bit into a
        // sticky bit so that the u64 -> f64 conversion rounds exactly once.
        let lo = msb - 63;
        let (window, exp) = if lo <= 0 {
            (mag[0], -FRAC_BITS)
        } else {
            let dropped_nonzero = (0..lo).any(|b| (mag[(b / 64) as usize] >> (b % 64)) & 1 == 1);
            (shr(&mag, lo as u32) | dropped_nonzero as u64, lo - FRAC_BITS)
        };
        let v = window as f64 * 2f64.powi(exp);
        if negative {
            -v
        } else {
            v
        }
    }
}

fn shr(v: &[u64; LIMBS], shift: u32) -> u64 {
    let limb = (shift / 64) as usize;
    let bit = shift % 64;
    let lo = v[limb] >> bit;
    let hi = if bit == 0 || limb + 1 >= LIMBS {
        0
    } else {
        v[limb + 1] << (64 - bit)
    };
    lo | hi
}

fn negate(v: &[u64; LIMBS]) -> [u64; LIMBS] {
    let mut out = [0u64; LIMBS];
    let mut carry = true;
    for (o, &x) in out.iter_mut().zip(v) {
        let (s, c) = (!x).overflowing_add(carry as u64);
        *o = s;
        carry = c;
    }
    out
}

fn to_fixed(x: f64) -> Option<[u64; LIMBS]> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some([0; LIMBS]);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    // x = mantissa * 2^exp; fixed-point integer = mantissa * 2^(exp + 96).
    let shift = exp + FRAC_BITS;
    if shift + 53 > MAX_BIT {
        return None;
    }
    let mut out = [0u64; LIMBS];
    if shift < 0 {
        if shift <= -64 {
            return Some(out);
        }
        out[0] = mantissa >> (-shift) as u32;
    } else {
        let limb = (shift / 64) as usize;
        let bit = (shift % 64) as u32;
        out[limb] = mantissa << bit;
        if bit != 0 && limb + 1 < LIMBS {
            out[limb + 1] = mantissa >> (64 - bit);
        }
    }
    if x < 0.0 {
        out = negate(&out);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sum_of(xs: &[f64]) -> ExactSum {
        let mut s = ExactSum::new();
        xs.iter().for_each(|&x| s.add(x));
        s
    }

    #[test]
    fn small_integers_and_fractions_are_exact() {
        assert_eq!(sum_of(&[1.0, 2.0, -0.5]).value(), 2.5);
        assert_eq!(sum_of(&[]).value(), 0.0);
        assert_eq!(sum_of(&[-3.25]).value(), -3.25);
        assert_eq!(sum_of(&[1e30, 1.0, -1e30]).value(), 1.0);
        assert_eq!(sum_of(&[0.1, 0.2]).value(), 0.30000000000000004);
    }

    #[test]
    fn values_round_trip() {
        for &x in &[
            1.0,
            -1.0,
            0.1,
            123456.789,
            3.0 * 2f64.powi(-70),
            -7.5e20,
            f64::EPSILON,
            2f64.powi(-96),
        ] {
            assert_eq!(sum_of(&[x]).value(), x, "{x}");
        }
        // Bits below 2^-96 are truncated.
        let tiny = sum_of(&[1e-20]).value();
        assert!(tiny <= 1e-20 && (1e-20 - tiny) < 2f64.powi(-96));
    }

    #[test]
    fn non_finite_poisons() {
        let s = sum_of(&[1.0, f64::NAN]);
        assert!(s.is_poisoned() && s.value().is_nan());
        assert!(sum_of(&[1e50]).is_poisoned());
    }

    proptest! {
        #[test]
        fn order_and_grouping_do_not_matter(xs in proptest::collection::vec(-1e6f64..1e6, 1..60), split in 0usize..60) {
            let whole = sum_of(&xs);
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert_eq!(sum_of(&rev), whole);
            let k = split.min(xs.len());
            let mut left = sum_of(&xs[..k]);
            left.merge(&sum_of(&xs[k..]));
            prop_assert_eq!(left, whole);
        }

        #[test]
        fn matches_high_precision_reference(xs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            // Reference: pairwise sum in extended precision via two-sum.
            let mut hi = 0.0f64;
            let mut lo = 0.0f64;
            for &x in &xs {
                let s = hi + x;
                let bp = s - hi;
                lo += (hi - (s - bp)) + (x - bp);
                hi = s;
            }
            let reference = hi + lo;
            let got = sum_of(&xs).value();
            prop_assert!((got - reference).abs() <= 2.0 * f64::EPSILON * reference.abs() + 1e-20);
        }
    }
}
