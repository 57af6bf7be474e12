//! Order-independent exact summation of non-negative doubles.
//!
//! Every finite non-negative `f64` is an integer multiple of 2^-1074. The
//! accumulator keeps one 128-bit integer per binary exponent and adds the
//! integer mantissa into it, so no rounding happens until [`ExactSum::value`]
//! converts the total to the nearest double (ties to even). The result is the
//! correctly rounded sum of the multiset of inputs, which makes it identical
//! for any input order and any split of the inputs across workers.

const BINS: usize = 2048 + 132;

#[derive(Clone)]
pub struct ExactSum {
    bins: Box<[u128]>,
    terms: u64,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSum")
            .field("value", &self.value())
            .field("terms", &self.terms)
            .finish()
    }
}

#[inline]
fn split(x: f64) -> (usize, u128) {
    debug_assert!(x >= 0.0 && x.is_finite(), "ExactSum takes finite x >= 0, got {x}");
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as usize;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (1, frac as u128)
    } else {
        (exp, (frac | (1u64 << 52)) as u128)
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            bins: vec![0u128; BINS].into_boxed_slice(),
            terms: 0,
        }
    }

    /// Adds a finite, non-negative value.
    #[inline]
    pub fn add(&mut self, x: f64) {
        let (bin, mantissa) = split(x);
        self.add_to_bin(bin, mantissa);
        self.terms += 1;
    }

    /// Adds `x` exactly `times` times.
    pub fn add_repeated(&mut self, x: f64, times: u64) {
        if times == 0 {
            return;
        }
        let (bin, mantissa) = split(x);
        // mantissa < 2^53 and times < 2^64, so the product fits in 117 bits.
        self.add_to_bin(bin, mantissa * times as u128);
        self.terms = self.terms.saturating_add(times);
    }

    #[inline]
    fn add_to_bin(&mut self, mut bin: usize, value: u128) {
        let (sum, overflow) = self.bins[bin].overflowing_add(value);
        self.bins[bin] = sum;
        if overflow {
            // One unit of bin b+128 equals 2^128 units of bin b.
            loop {
                bin += 128;
                let (s, o) = self.bins[bin].overflowing_add(1);
                self.bins[bin] = s;
                if !o {
                    break;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for (bin, &v) in other.bins.iter().enumerate() {
            if v != 0 {
                self.add_to_bin(bin, v);
            }
        }
        self.terms = self.terms.saturating_add(other.terms);
    }

    /// Number of terms added so far.
    pub fn terms(&self) -> u64 {
        self.terms
    }

    /// The correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        // Bin b holds multiples of 2^(b-1) in units of 2^-1074.
        let limbs_len = BINS / 64 + 4;
        let mut limbs = vec![0u64; limbs_len];
        for (bin, &v) in self.bins.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let shift = bin.saturating_sub(1);
            add_shifted(&mut limbs, v, shift);
        }
        to_f64(&limbs)
    }
}

fn add_shifted(limbs: &mut [u64], v: u128, shift: usize) {
    let word = shift / 64;
    let off = shift % 64;
    // v << off spans up to three 64-bit words.
    let lo = (v as u64) as u128;
    let hi = (v >> 64) as u64 as u128;
    let parts: [u64; 3] = if off == 0 {
        [lo as u64, hi as u64, 0]
    } else {
        let w0 = (lo << off) as u64;
        let w1 = ((lo >> (64 - off)) | (hi << off)) as u64;
        let w2 = (hi >> (64 - off)) as u64;
        [w0, w1, w2]
    };
    let mut carry = 0u64;
    let mut i = word;
    for p in parts {
        let (s1, c1) = limbs[i].overflowing_add(p);
        let (s2, c2) = s1.overflowing_add(carry);
        limbs[i] = s2;
        carry = (c1 as u64) + (c2 as u64);
        i += 1;
    }
    while carry != 0 {
        let (s, c) = limbs[i].overflowing_add(carry);
        limbs[i] = s;
        carry = c as u64;
        i += 1;
    }
}

fn bit(limbs: &[u64], idx: usize) -> bool {
    (limbs[idx / 64] >> (idx % 64)) & 1 == 1
}

fn any_below(limbs: &[u64], idx: usize) -> bool {
    // any bit strictly below position idx
    let word = idx / 64;
    if limbs[..word].iter().any(|&w| w != 0) {
        return true;
    }
    let off = idx % 64;
    off > 0 && limbs[word] & ((1u64 << off) - 1) != 0
}

fn extract(limbs: &[u64], low: usize, count: usize) -> u64 {
    let mut out = 0u64;
    for k in 0..count {
        if bit(limbs, low + k) {
            out |= 1 << k;
        }
    }
    out
}

fn to_f64(limbs: &[u64]) -> f64 {
    let Some(top_word) = limbs.iter().rposition(|&w| w != 0) else {
        return 0.0;
    };
    let h = top_word * 64 + 63 - limbs[top_word].leading_zeros() as usize;
    if h < 53 {
        let t = extract(limbs, 0, h + 1);
        return t as f64 * f64::from_bits(1);
    }
    let low = h - 52;
    let mut q = extract(limbs, low, 53);
    let round_bit = bit(limbs, low - 1);
    let sticky = any_below(limbs, low - 1);
    let mut h = h;
    if round_bit && (sticky || q & 1 == 1) {
        q += 1;
        if q == 1 << 53 {
            q >>= 1;
            h += 1;
        }
    }
    let exp = h - 51;
    if exp >= 0x7ff {
        return f64::INFINITY;
    }
    f64::from_bits(((exp as u64) << 52) | (q - (1 << 52)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    #[test]
    fn small_integers() {
        let mut s = ExactSum::new();
        for k in 1..=100 {
            s.add(k as f64);
        }
        assert_eq!(s.value(), 5050.0);
        assert_eq!(s.terms(), 100);
    }

    #[test]
    fn cancellation_free_of_rounding_drift() {
        // 1e16 + 1 + 1 rounds badly left to right in plain f64.
        let mut s = ExactSum::new();
        s.add(1e16);
        s.add(1.0);
        s.add(1.0);
        assert_eq!(s.value(), 1e16 + 2.0);
    }

    #[test]
    fn ties_round_to_even() {
        // 2^53 + 1 is exactly half way between 2^53 and 2^53 + 2.
        let mut s = ExactSum::new();
        s.add(9007199254740992.0);
        s.add(1.0);
        assert_eq!(s.value(), 9007199254740992.0);
        s.add(2.0);
        // 2^53 + 3 is half way between +2 and +4: rounds to +4 (even mantissa).
        assert_eq!(s.value(), 9007199254740996.0);
    }

    #[test]
    fn subnormals() {
        let tiny = f64::from_bits(1);
        let mut s = ExactSum::new();
        s.add(tiny);
        s.add(tiny);
        assert_eq!(s.value(), f64::from_bits(2));
    }

    #[test]
    fn repeated_matches_loop() {
        let mut a = ExactSum::new();
        let mut b = ExactSum::new();
        a.add_repeated(0.1, 1000);
        for _ in 0..1000 {
            b.add(0.1);
        }
        assert_eq!(a.value(), b.value());
        assert_eq!(a.terms(), 1000);
    }

    #[test]
    fn bin_overflow_carries() {
        let mut s = ExactSum::new();
        // each add is mantissa 2^53-1 times 2^64-1, two of them overflow a u128 bin
        let x = f64::from_bits((1023u64 << 52) | ((1u64 << 52) - 1));
        for _ in 0..(1 << 12) {
            s.add_repeated(x, u64::MAX);
        }
        let expected = x * (u64::MAX as f64) * 4096.0;
        let got = s.value();
        assert!(((got - expected) / expected).abs() < 1e-15, "{got} vs {expected}");
    }

    proptest! {
        #[test]
        fn order_and_split_independent(values in proptest::collection::vec(0.0f64..1e6, 0..200), cut in 0usize..200) {
            let mut forward = ExactSum::new();
            for &v in &values { forward.add(v); }
            let mut backward = ExactSum::new();
            for &v in values.iter().rev() { backward.add(v); }
            prop_assert_eq!(forward.value().to_bits(), backward.value().to_bits());

            let cut = cut.min(values.len());
            let mut left = ExactSum::new();
            let mut right = ExactSum::new();
            for &v in &values[..cut] { left.add(v); }
            for &v in &values[cut..] { right.add(v); }
            left.merge(&right);
            prop_assert_eq!(left.value().to_bits(), forward.value().to_bits());
        }

        #[test]
        fn close_to_naive(values in proptest::collection::vec(0.0f64..1e3, 1..500)) {
            let naive: f64 = values.iter().sum();
            let mut s = ExactSum::new();
            for &v in &values { s.add(v); }
            prop_assert!((s.value() - naive).abs() <= 1e-9 * naive.max(1.0));
        }
    }
}
