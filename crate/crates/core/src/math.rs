//! Integer parameter helpers and exact bounds on Euler's number.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

/// `ceil(log2(max(n, 2)))`.
pub fn log2_ceil(n: usize) -> u32 {
    let n = n.max(2) as u64;
    64 - (n - 1).leading_zeros()
}

/// `ceil(log_{4/3}(max(n, 1)))`, computed exactly.
pub fn log43_ceil(n: usize) -> u32 {
    let n = BigUint::from(n.max(1));
    let mut four = BigUint::one();
    let mut three = BigUint::one();
    let mut t = 0;
    while four < &n * &three {
        four *= 4u32;
        three *= 3u32;
        t += 1;
    }
    t
}

/// Smallest integer `x >= 1` with `x^lambda >= n`.
pub fn ceil_root(n: usize, lambda: u32) -> usize {
    assert!(lambda >= 1);
    if n <= 1 {
        return 1;
    }
    let fits = |x: usize| -> bool {
        let mut acc: u128 = 1;
        for _ in 0..lambda {
            acc = acc.saturating_mul(x as u128);
            if acc >= n as u128 {
                return true;
            }
        }
        acc >= n as u128
    };
    let (mut lo, mut hi) = (1usize, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Rational `(lo, hi)` with `lo < e < hi`; the gap is below `10^-25`.
pub fn e_bounds() -> (BigRational, BigRational) {
    let mut sum = BigRational::zero();
    let mut fact = BigInt::one();
    for k in 0..=26u32 {
        if k > 0 {
            fact *= k;
        }
        sum += BigRational::new(BigInt::one(), fact.clone());
    }
    // tail sum_{k>26} 1/k! < 2/27!
    let tail = BigRational::new(BigInt::from(2), fact * BigInt::from(27));
    let hi = &sum + tail;
    (sum, hi)
}

/// Three-way answer for comparisons against expressions involving `e`.
pub fn e_pow_times_lt_one(coef: &BigRational, power: u32) -> bool {
    // decides coef * e^power < 1 using the enclosing interval
    let (lo, hi) = e_bounds();
    let pow = |x: &BigRational| -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..power {
            acc *= x;
        }
        acc
    };
    let one = BigRational::one();
    let upper = coef * pow(&hi);
    if upper < one {
        return true;
    }
    let lower = coef * pow(&lo);
    if lower >= one {
        return false;
    }
    // the interval straddles 1; treat the boundary case conservatively
    false
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_ceil_values() {
        assert_eq!(log2_ceil(0), 1);
        assert_eq!(log2_ceil(1), 1);
        assert_eq!(log2_ceil(2), 1);
        assert_eq!(log2_ceil(3), 2);
        assert_eq!(log2_ceil(4), 2);
        assert_eq!(log2_ceil(5), 3);
        assert_eq!(log2_ceil(1024), 10);
        assert_eq!(log2_ceil(1025), 11);
    }

    #[test]
    fn log43_ceil_values() {
        // (4/3)^24 = 993.3, (4/3)^25 = 1324.4
        assert_eq!(log43_ceil(1024), 25);
        assert_eq!(log43_ceil(1), 0);
        assert_eq!(log43_ceil(2), 3);
        // (4/3)^15 = 74.8 >= 64 > (4/3)^14 = 56.1
        assert_eq!(log43_ceil(64), 15);
        // (4/3)^20 = 315.3 >= 256 > (4/3)^19 = 236.5
        assert_eq!(log43_ceil(256), 20);
    }

    #[test]
    fn ceil_root_values() {
        assert_eq!(ceil_root(256, 2), 16);
        assert_eq!(ceil_root(256, 3), 7);
        assert_eq!(ceil_root(81, 4), 3);
        assert_eq!(ceil_root(1024, 10), 2);
        assert_eq!(ceil_root(1, 3), 1);
        assert_eq!(ceil_root(1000, 3), 10);
        assert_eq!(ceil_root(1001, 3), 11);
    }

    #[test]
    fn e_is_enclosed() {
        let (lo, hi) = e_bounds();
        let lo = ratio_to_f64(&lo);
        let hi = ratio_to_f64(&hi);
        assert!(lo <= std::f64::consts::E && std::f64::consts::E <= hi);
    }

    #[test]
    fn e_comparisons() {
        use num_bigint::BigInt;
        // e * 1/3 < 1, e * 1/2 > 1
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        assert!(e_pow_times_lt_one(&third, 1));
        assert!(!e_pow_times_lt_one(&half, 1));
    }
}
