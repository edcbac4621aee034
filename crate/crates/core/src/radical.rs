//! Quadratic irrationals `a + b·√c` and the double-double arithmetic used to
//! evaluate orbit coordinates `frac(x + n·α)` without losing precision for
//! large `n`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadicalError {
    #[error("radicand must be positive, got {0}")]
    BadRadicand(u64),
    #[error("cannot parse rational `{0}`")]
    BadRational(String),
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (s, e) = two_sum(hi, lo);
        DoubleDouble { hi: s, lo: e }
    }

    /// `num/den` to ~106 bits. Both operands must be exactly representable.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        let (n, d) = (num as f64, den as f64);
        let hi = n / d;
        let lo = (-hi).mul_add(d, n) / d;
        Self::renorm(hi, lo)
    }

    pub fn sqrt_int(c: u64) -> Self {
        let cf = c as f64;
        let s = cf.sqrt();
        let r = (-s).mul_add(s, cf);
        Self::renorm(s, r / (2.0 * s))
    }

    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        Self::renorm(s, e + self.lo + other.lo)
    }

    pub fn mul(self, other: Self) -> Self {
        let (p, e) = two_prod(self.hi, other.hi);
        Self::renorm(p, e + self.hi * other.lo + self.lo * other.hi)
    }

    pub fn mul_i64(self, n: i64) -> Self {
        let nf = n as f64;
        let (p, e) = two_prod(self.hi, nf);
        Self::renorm(p, e + self.lo * nf)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Fractional part in `[0, 1)`.
    pub fn frac(self) -> f64 {
        let k = self.hi.floor();
        let r = (self.hi - k) + self.lo;
        let r = r - r.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }
}

/// `rational + coeff·√radicand` with exact rational parts.
///
/// The radicand is always stored square-free; a radicand of 1 (or a zero
/// coefficient) means the value is rational.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "QuadRecord", into = "QuadRecord")]
pub struct QuadIrrational {
    rational: Rational64,
    coeff: Rational64,
    radicand: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuadRecord {
    #[serde(default = "zero_str")]
    rational: String,
    #[serde(default = "zero_str")]
    coeff: String,
    #[serde(default = "one_u64")]
    radicand: u64,
}

fn zero_str() -> String {
    "0".into()
}

fn one_u64() -> u64 {
    1
}

pub fn parse_rational(s: &str) -> Result<Rational64, RadicalError> {
    let bad = || RadicalError::BadRational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational64::new(n, d))
        }
        None => s.parse::<i64>().map(Rational64::from_integer).map_err(|_| bad()),
    }
}

impl TryFrom<QuadRecord> for QuadIrrational {
    type Error = RadicalError;
    fn try_from(r: QuadRecord) -> Result<Self, Self::Error> {
        QuadIrrational::new(
            parse_rational(&r.rational)?,
            parse_rational(&r.coeff)?,
            r.radicand,
        )
    }
}

impl From<QuadIrrational> for QuadRecord {
    fn from(q: QuadIrrational) -> Self {
        QuadRecord {
            rational: q.rational.to_string(),
            coeff: q.coeff.to_string(),
            radicand: q.radicand,
        }
    }
}

/// Splits `c = s²·f` with `f` square-free.
pub fn square_free_part(c: u64) -> (u64, u64) {
    let mut s = 1u64;
    let mut f = c;
    let mut p = 2u64;
    while p * p <= f {
        while f % (p * p) == 0 {
            f /= p * p;
            s *= p;
        }
        p += 1;
    }
    (s, f)
}

pub fn is_square_free(c: u64) -> bool {
    c > 0 && square_free_part(c).0 == 1
}

/// Square-free integers `>= 2`, in increasing order, up to `bound` inclusive.
pub fn square_free_generators(bound: u64) -> Vec<u64> {
    (2..=bound).filter(|&c| is_square_free(c)).collect()
}

/// First `count` primes.
pub fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

impl QuadIrrational {
    pub fn new(rational: Rational64, coeff: Rational64, radicand: u64) -> Result<Self, RadicalError> {
        if radicand == 0 {
            return Err(RadicalError::BadRadicand(radicand));
        }
        let (s, f) = square_free_part(radicand);
        let coeff = coeff * Rational64::from_integer(s as i64);
        if f == 1 || coeff.is_zero() {
            return Ok(QuadIrrational {
                rational: rational + if f == 1 { coeff } else { Rational64::zero() },
                coeff: Rational64::zero(),
                radicand: 1,
            });
        }
        Ok(QuadIrrational { rational, coeff, radicand: f })
    }

    pub fn rational(q: Rational64) -> Self {
        QuadIrrational { rational: q, coeff: Rational64::zero(), radicand: 1 }
    }

    /// `√c - ⌊√c⌋`, the fractional part of a square root.
    pub fn frac_sqrt(c: u64) -> Result<Self, RadicalError> {
        let floor = (c as f64).sqrt().floor() as i64;
        Self::new(Rational64::from_integer(-floor), Rational64::one(), c)
    }

    pub fn rational_part(&self) -> Rational64 {
        self.rational
    }

    pub fn coeff(&self) -> Rational64 {
        self.coeff
    }

    pub fn radicand(&self) -> u64 {
        self.radicand
    }

    pub fn is_irrational(&self) -> bool {
        self.radicand > 1 && !self.coeff.is_zero()
    }

    pub fn scale(&self, k: Rational64) -> Self {
        QuadIrrational {
            rational: self.rational * k,
            coeff: self.coeff * k,
            radicand: if (self.coeff * k).is_zero() { 1 } else { self.radicand },
        }
    }

    pub fn add_rational(&self, k: Rational64) -> Self {
        QuadIrrational { rational: self.rational + k, ..self.clone() }
    }

    pub fn to_dd(&self) -> DoubleDouble {
        let a = DoubleDouble::from_ratio(*self.rational.numer(), *self.rational.denom());
        if self.radicand == 1 {
            return a;
        }
        let b = DoubleDouble::from_ratio(*self.coeff.numer(), *self.coeff.denom());
        a.add(b.mul(DoubleDouble::sqrt_int(self.radicand)))
    }

    pub fn to_f64(&self) -> f64 {
        self.to_dd().to_f64()
    }

    /// Coordinates over the basis `{1, √c}`; the key 1 holds the rational part.
    pub fn basis_vector(&self) -> BTreeMap<u64, Rational64> {
        let mut v = BTreeMap::new();
        if !self.rational.is_zero() {
            v.insert(1, self.rational);
        }
        if self.radicand > 1 && !self.coeff.is_zero() {
            v.insert(self.radicand, self.coeff);
        }
        v
    }
}

impl fmt::Display for QuadIrrational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.radicand == 1 {
            write!(f, "{}", self.rational)
        } else {
            write!(f, "{} + {}·√{}", self.rational, self.coeff, self.radicand)
        }
    }
}

/// Outcome of exact Gaussian elimination over the radical basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceCertificate {
    pub size: usize,
    pub rank: usize,
    /// Input indices whose row reduced to zero.
    pub dependent_rows: Vec<usize>,
}

impl IndependenceCertificate {
    pub fn independent(&self) -> bool {
        self.rank == self.size
    }
}

/// Decides ℚ-linear independence of `values` by sparse elimination over the
/// basis `{1, √c₁, √c₂, …}`. Valid because square roots of distinct
/// square-free integers are ℚ-independent.
pub fn certify_independence(values: &[QuadIrrational]) -> IndependenceCertificate {
    let to_big = |r: &Rational64| {
        BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
    };
    // pivot column -> reduced row, normalised so the pivot entry is 1
    let mut pivots: BTreeMap<u64, BTreeMap<u64, BigRational>> = BTreeMap::new();
    let mut dependent_rows = Vec::new();
    let mut rank = 0;

    for (idx, v) in values.iter().enumerate() {
        let mut row: BTreeMap<u64, BigRational> =
            v.basis_vector().iter().map(|(&k, r)| (k, to_big(r))).collect();
        loop {
            let hit = row.keys().rev().find(|k| pivots.contains_key(k)).copied();
            let Some(col) = hit else { break };
            let factor = row[&col].clone();
            for (k, p) in &pivots[&col] {
                let e = row.entry(*k).or_insert_with(BigRational::zero);
                *e -= &factor * p;
            }
            row.retain(|_, x| !x.is_zero());
        }
        match row.keys().next_back().copied() {
            None => dependent_rows.push(idx),
            Some(col) => {
                let lead = row[&col].clone();
                for x in row.values_mut() {
                    *x /= &lead;
                }
                // keep earlier pivot rows reduced against the new one
                for other in pivots.values_mut() {
                    if let Some(f) = other.get(&col).cloned() {
                        for (k, p) in &row {
                            let e = other.entry(*k).or_insert_with(BigRational::zero);
                            *e -= &f * p;
                        }
                        other.retain(|_, x| !x.is_zero());
                    }
                }
                pivots.insert(col, row);
                rank += 1;
            }
        }
    }
    IndependenceCertificate { size: values.len(), rank, dependent_rows }
}
