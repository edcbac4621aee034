use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Ordered field used by the exact-arithmetic parts of the crate.
///
/// Floats give fast approximate evaluation; `Ratio<i64>` and
/// `Ratio<BigInt>` make interval and cube membership exact.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    fn from_ratio(num: i64, den: i64) -> Self;

    fn floor_scalar(&self) -> Self;

    fn from_count(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Floor as a machine integer. Panics if the value does not fit.
    fn floor_i64(&self) -> i64 {
        self.floor_scalar()
            .to_i64()
            .expect("scalar floor out of i64 range")
    }

    /// Euclidean remainder, always in `[0, modulus)` for positive `modulus`.
    fn rem_floor(&self, modulus: &Self) -> Self {
        let q = (self.clone() / modulus.clone()).floor_scalar();
        self.clone() - q * modulus.clone()
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f32 / den as f32
    }
    fn floor_scalar(&self) -> Self {
        self.floor()
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn floor_scalar(&self) -> Self {
        self.floor()
    }
}

impl Scalar for Ratio<i64> {
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(num, den)
    }
    fn floor_scalar(&self) -> Self {
        self.floor()
    }
}

impl Scalar for Ratio<BigInt> {
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }
    fn floor_scalar(&self) -> Self {
        self.floor()
    }
}

/// Exact linear grid `lo + (hi - lo) * k / (count - 1)` for `k` in `0..count`.
pub fn linear_grid<T: Scalar>(lo: &T, hi: &T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![lo.clone()],
        _ => (0..count)
            .map(|k| {
                let frac = T::from_ratio(k as i64, (count - 1) as i64);
                lo.clone() + (hi.clone() - lo.clone()) * frac
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn rem_floor_is_nonnegative() {
        let m = Rational64::new(3, 1);
        assert_eq!(Rational64::new(-1, 2).rem_floor(&m), Rational64::new(5, 2));
        assert_eq!((-0.5f64).rem_floor(&3.0), 2.5);
        assert_eq!(Rational64::new(7, 1).rem_floor(&m), Rational64::new(1, 1));
    }

    #[test]
    fn exact_grid_endpoints() {
        let g = linear_grid(&Rational64::new(0, 1), &Rational64::new(1, 1), 4);
        assert_eq!(g[1], Rational64::new(1, 3));
        assert_eq!(g[3], Rational64::new(1, 1));
    }
}
