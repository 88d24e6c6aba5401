//! Scalar abstraction shared by the series, expression and linear-algebra
//! kernels.
//!
//! The algebraic pipeline runs over exact rationals so that symbol ranks,
//! echelon forms and frame normalizations are reproducible bit for bit.  The
//! chain integrator and the Newton oracle run the very same kernels over
//! `f64`.  Everything that is generic is generic over [`Scalar`].

use std::fmt;
use std::ops::Neg;

use num_bigint::BigInt;
use num_traits::{Num, One, Signed, Zero};

/// Exact rational scalar used throughout the algebraic pipeline.
pub type Rat = num_rational::BigRational;

/// Field scalar usable by the series/expression/linear-algebra kernels.
pub trait Scalar:
    'static + Clone + fmt::Debug + fmt::Display + PartialEq + Num + Neg<Output = Self> + Signed
{
    /// Whether arithmetic in this scalar is exact (no rounding).
    const EXACT: bool;

    /// Injects a rational constant.
    fn from_rat(r: &Rat) -> Self;

    /// Square root, when representable: exact perfect-square roots for
    /// rationals, ordinary `sqrt` for floats.  `None` signals that the value
    /// has no representable root (negative, or irrational in exact mode).
    fn try_sqrt(&self) -> Option<Self>;

    /// Magnitude used for pivot selection in row reduction.  Exact scalars
    /// may return any positive value for nonzero entries.
    fn pivot_weight(&self) -> f64;

    /// Lossy view as `f64`, used by reports and by the float lane.
    fn to_f64(&self) -> f64;
}

fn bigint_perfect_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    if &(&r * &r) == n {
        Some(r)
    } else {
        None
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;

    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }

    fn try_sqrt(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let num = bigint_perfect_sqrt(self.numer())?;
        let den = bigint_perfect_sqrt(self.denom())?;
        Some(Rat::new(num, den))
    }

    fn pivot_weight(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            // Prefer pivots with small numerator/denominator to limit growth.
            let size = self.numer().bits() + self.denom().bits();
            1.0 / (1.0 + size as f64)
        }
    }

    fn to_f64(&self) -> f64 {
        rat_to_f64(self)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rat(r: &Rat) -> Self {
        rat_to_f64(r)
    }

    fn try_sqrt(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(self.sqrt())
        }
    }

    fn pivot_weight(&self) -> f64 {
        self.abs()
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Converts a big rational to `f64`, tolerating values outside `i64` range.
pub fn rat_to_f64(r: &Rat) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or_else(|| {
        // Extremely large intermediate; fall back to a quotient of leading
        // digit approximations.
        let n = r.numer().to_string();
        let d = r.denom().to_string();
        let approx = |s: &str| -> f64 {
            let neg = s.starts_with('-');
            let digits = s.trim_start_matches('-');
            let head: f64 = digits[..digits.len().min(15)].parse().unwrap_or(0.0);
            let scale = digits.len().saturating_sub(15) as f64;
            let v = head * 10f64.powf(scale);
            if neg {
                -v
            } else {
                v
            }
        };
        approx(&n) / approx(&d)
    })
}

/// Rational from an integer pair.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Rational from an integer.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses a `"num/den"` or `"num"` string into a rational.
pub fn rat_from_str(s: &str) -> Option<Rat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Rat::new(n, d))
            }
        }
        None => {
            let n: BigInt = s.parse().ok()?;
            Some(Rat::from_integer(n))
        }
    }
}

/// Renders a rational as `"num/den"` (or `"num"` for integers), the format
/// used by all JSON interfaces.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Deterministic splitmix64 generator for reproducible random rational test
/// points.  Not a statistical-quality RNG; it only needs to miss the measure
/// zero degenerate sets.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            state: seed.wrapping_add(0x9e3779b97f4a7c15),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }

    /// Small nonzero rational with numerator in `[-9, 9]` and denominator in
    /// `[1, 7]`.
    pub fn small_rat(&mut self) -> Rat {
        let n = (self.below(19) as i64) - 9;
        let n = if n == 0 { 1 } else { n };
        let d = (self.below(7) as i64) + 1;
        rat(n, d)
    }

    /// Small rational allowed to be zero.
    pub fn small_rat_or_zero(&mut self) -> Rat {
        let n = (self.below(19) as i64) - 9;
        let d = (self.below(7) as i64) + 1;
        rat(n, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_square_roots() {
        assert_eq!(rat(9, 4).try_sqrt(), Some(rat(3, 2)));
        assert_eq!(rat(4, 1).try_sqrt(), Some(rat(2, 1)));
        assert_eq!(rat(2, 1).try_sqrt(), None);
        assert_eq!(rat(-4, 1).try_sqrt(), None);
    }

    #[test]
    fn rational_string_round_trip() {
        for s in ["3/2", "-7/5", "4", "0", "-12"] {
            let r = rat_from_str(s).unwrap();
            assert_eq!(rat_to_string(&r), s);
        }
        assert!(rat_from_str("1/0").is_none());
    }

    #[test]
    fn seeded_rng_is_deterministic() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
