//! Truncated multivariate power series over a generic scalar.
//!
//! Series are dense maps from multi-indices to coefficients, truncated at a
//! fixed total order; arithmetic never produces terms above the truncation
//! order.  Over exact rationals every operation is exact, including `invert`
//! and `sqrt` (the latter requires a perfect-square constant term).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::multiindex::MultiIndex;
use crate::scalar::{rat_from_str, rat_to_string, Rat, Scalar};

/// Errors raised by series arithmetic.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SeriesError {
    #[error("series shape mismatch: {0} vars/order {1} vs {2} vars/order {3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("constant term is zero; series is not invertible")]
    ZeroConstantTerm,
    #[error("constant term must be positive for sqrt")]
    NonPositiveConstant,
    #[error("constant term has no exact square root")]
    IrrationalRoot,
    #[error("composition requires inner series with zero constant term")]
    InnerConstantTerm,
    #[error("series reversion requires zero constant term and unit linear term")]
    NotInvertibleMap,
}

/// Exact-rational truncated multivariate Taylor polynomial (or its float
/// counterpart via the scalar parameter).
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries<T: Scalar> {
    num_vars: usize,
    truncation_order: usize,
    coeffs: BTreeMap<MultiIndex, T>,
}

/// The exact lane used by the algebraic pipeline.
pub type Series = TruncatedSeries<Rat>;
/// The float lane used by the chain integrator.
pub type SeriesF = TruncatedSeries<f64>;

impl<T: Scalar> TruncatedSeries<T> {
    pub fn zero(num_vars: usize, truncation_order: usize) -> Self {
        TruncatedSeries {
            num_vars,
            truncation_order,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, truncation_order: usize, c: T) -> Self {
        let mut s = Self::zero(num_vars, truncation_order);
        s.set(MultiIndex::empty(), c);
        s
    }

    /// The monomial `x^i` (1-based variable index).
    pub fn variable(num_vars: usize, truncation_order: usize, i: u8) -> Self {
        let mut s = Self::zero(num_vars, truncation_order);
        s.set(MultiIndex::single(i), T::one());
        s
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn truncation_order(&self) -> usize {
        self.truncation_order
    }

    pub fn coeff(&self, j: &MultiIndex) -> T {
        self.coeffs.get(j).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &T)> {
        self.coeffs.iter()
    }

    pub fn set(&mut self, j: MultiIndex, c: T) {
        if j.order() > self.truncation_order {
            return;
        }
        if c.is_zero() {
            self.coeffs.remove(&j);
        } else {
            self.coeffs.insert(j, c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn check_shape(&self, other: &Self) -> Result<(), SeriesError> {
        if self.num_vars != other.num_vars || self.truncation_order != other.truncation_order {
            return Err(SeriesError::ShapeMismatch(
                self.num_vars,
                self.truncation_order,
                other.num_vars,
                other.truncation_order,
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_shape(other)?;
        let mut out = self.clone();
        for (j, c) in &other.coeffs {
            let v = out.coeff(j) + c.clone();
            out.set(j.clone(), v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = Self::zero(self.num_vars, self.truncation_order);
        for (j, c) in &self.coeffs {
            out.set(j.clone(), c.clone() * s.clone());
        }
        out
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_shape(other)?;
        let mut out = Self::zero(self.num_vars, self.truncation_order);
        for (ja, ca) in &self.coeffs {
            if ja.order() > self.truncation_order {
                continue;
            }
            for (jb, cb) in &other.coeffs {
                if ja.order() + jb.order() > self.truncation_order {
                    continue;
                }
                let j = ja.concat(jb);
                let v = out.coeff(&j) + ca.clone() * cb.clone();
                out.set(j, v);
            }
        }
        Ok(out)
    }

    /// Multiplicative inverse: `self * invert(self) = 1` up to the truncation
    /// order.  Requires a nonzero constant term.
    pub fn invert(&self) -> Result<Self, SeriesError> {
        let a0 = self.coeff(&MultiIndex::empty());
        if a0.is_zero() {
            return Err(SeriesError::ZeroConstantTerm);
        }
        let inv_a0 = T::one() / a0.clone();
        // Newton-free order-by-order recurrence: with a = a0 + r,
        // b_n coefficients solve (a0 + r)·b = 1 degree by degree.
        let mut out = Self::constant(self.num_vars, self.truncation_order, inv_a0.clone());
        for n in 1..=self.truncation_order {
            for j in MultiIndex::all_of_order(self.num_vars as u8, n) {
                // coefficient of j in r*b, using only b terms of order < n
                let mut acc = T::zero();
                for (jr, cr) in &self.coeffs {
                    if jr.order() == 0 || jr.order() > n {
                        continue;
                    }
                    if let Some(jb) = j.subtract(jr) {
                        let cb = out.coeff(&jb);
                        if !cb.is_zero() {
                            acc = acc + cr.clone() * cb;
                        }
                    }
                }
                if !acc.is_zero() {
                    out.set(j, -(inv_a0.clone() * acc));
                }
            }
        }
        Ok(out)
    }

    /// Square root with `sqrt(a)^2 = a` up to the truncation order.  The
    /// constant term must be positive and, in exact mode, a perfect square.
    pub fn sqrt(&self) -> Result<Self, SeriesError> {
        let a0 = self.coeff(&MultiIndex::empty());
        if a0.is_zero() || a0.is_negative() {
            return Err(SeriesError::NonPositiveConstant);
        }
        let r0 = a0.try_sqrt().ok_or(SeriesError::IrrationalRoot)?;
        let two_r0_inv = T::one() / (r0.clone() + r0.clone());
        let mut out = Self::constant(self.num_vars, self.truncation_order, r0);
        for n in 1..=self.truncation_order {
            // 2 r0 b_j = a_j - sum_{both factors of order in 1..n} b b
            for j in MultiIndex::all_of_order(self.num_vars as u8, n) {
                let mut acc = self.coeff(&j);
                for (jb, cb) in out.coeffs.clone() {
                    let k = jb.order();
                    if k == 0 || k >= n {
                        continue;
                    }
                    if let Some(jc) = j.subtract(&jb) {
                        debug_assert_eq!(jc.order(), n - k);
                        let cc = out.coeff(&jc);
                        if !cc.is_zero() {
                            acc = acc - cb.clone() * cc;
                        }
                    }
                }
                if !acc.is_zero() {
                    out.set(j, two_r0_inv.clone() * acc);
                }
            }
        }
        Ok(out)
    }

    /// Formal partial derivative in direction `i` (1-based).
    pub fn derivative(&self, i: u8) -> Self {
        let mut out = Self::zero(self.num_vars, self.truncation_order);
        for (j, c) in &self.coeffs {
            let k = j.count(i);
            if k == 0 {
                continue;
            }
            let reduced = j.remove(i).expect("entry present");
            let factor = T::from_rat(&Rat::from_integer(num_bigint::BigInt::from(k as i64)));
            let v = out.coeff(&reduced) + factor * c.clone();
            out.set(reduced, v);
        }
        out
    }

    /// Evaluates the polynomial at a point.
    pub fn eval(&self, point: &[T]) -> T {
        assert_eq!(point.len(), self.num_vars);
        let mut acc = T::zero();
        for (j, c) in &self.coeffs {
            let mut term = c.clone();
            for &e in j.entries() {
                term = term * point[(e - 1) as usize].clone();
            }
            acc = acc + term;
        }
        acc
    }

    /// Substitutes `inner[k]` for variable `k+1`; all inner series must have
    /// zero constant term so that truncation is consistent.
    pub fn compose(&self, inner: &[Self]) -> Result<Self, SeriesError> {
        assert_eq!(inner.len(), self.num_vars);
        for s in inner {
            if !s.coeff(&MultiIndex::empty()).is_zero() {
                return Err(SeriesError::InnerConstantTerm);
            }
        }
        let nv = inner[0].num_vars;
        let n = self.truncation_order.min(inner[0].truncation_order);
        // Horner-style accumulation over powers of the inner series.
        let mut out = TruncatedSeries::zero(nv, n);
        // power cache: monomial -> product of inner powers
        let one = TruncatedSeries::constant(nv, n, T::one());
        let mut cache: BTreeMap<MultiIndex, TruncatedSeries<T>> = BTreeMap::new();
        cache.insert(MultiIndex::empty(), one);
        for (j, c) in &self.coeffs {
            if j.order() > n {
                continue;
            }
            let pow = Self::monomial_power(j, inner, &mut cache)?;
            out = out.add(&pow.scale(&c.clone()))?;
        }
        Ok(out)
    }

    fn monomial_power(
        j: &MultiIndex,
        inner: &[Self],
        cache: &mut BTreeMap<MultiIndex, TruncatedSeries<T>>,
    ) -> Result<TruncatedSeries<T>, SeriesError> {
        if let Some(hit) = cache.get(j) {
            return Ok(hit.clone());
        }
        let first = j.entries()[0];
        let rest = j.remove(first).expect("nonempty");
        let prev = Self::monomial_power(&rest, inner, cache)?;
        let result = prev.mul(&inner[(first - 1) as usize])?;
        cache.insert(j.clone(), result.clone());
        Ok(result)
    }

    /// Re-centers the polynomial at `point`, returning the expansion in the
    /// displacement variables.
    pub fn recenter(&self, point: &[T]) -> Self {
        assert_eq!(point.len(), self.num_vars);
        // Substitute x_i -> point_i + t_i exactly (polynomial identity).
        let n = self.truncation_order;
        let mut out = Self::zero(self.num_vars, n);
        for (j, c) in &self.coeffs {
            // expand prod (point_e + t_e) over the multiset of entries
            let mut parts: Vec<TruncatedSeries<T>> = Vec::new();
            for &e in j.entries() {
                let mut f = Self::constant(self.num_vars, n, point[(e - 1) as usize].clone());
                f.set(MultiIndex::single(e), T::one());
                parts.push(f);
            }
            let mut term = Self::constant(self.num_vars, n, c.clone());
            for f in parts {
                term = term.mul(&f).expect("same shape");
            }
            out = out.add(&term).expect("same shape");
        }
        out
    }

    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U) -> TruncatedSeries<U> {
        let mut out = TruncatedSeries::zero(self.num_vars, self.truncation_order);
        for (j, c) in &self.coeffs {
            out.set(j.clone(), f(c));
        }
        out
    }
}

impl Series {
    /// Float view of an exact series.
    pub fn to_float(&self) -> SeriesF {
        self.map_scalar(|c| c.to_f64())
    }
}

/// Compositional inverse of a univariate series with zero constant term and
/// nonzero linear term: `rev(f)(f(x)) = x` up to the truncation order.
pub fn reversion<T: Scalar>(f: &TruncatedSeries<T>) -> Result<TruncatedSeries<T>, SeriesError> {
    assert_eq!(f.num_vars(), 1);
    let n = f.truncation_order();
    if !f.coeff(&MultiIndex::empty()).is_zero() {
        return Err(SeriesError::NotInvertibleMap);
    }
    let f1 = f.coeff(&MultiIndex::single(1));
    if f1.is_zero() {
        return Err(SeriesError::NotInvertibleMap);
    }
    // Order-by-order: g(f(x)) = x. Start with g = x / f1.
    let mut g = TruncatedSeries::zero(1, n);
    g.set(MultiIndex::single(1), T::one() / f1.clone());
    for _ in 2..=n {
        // residual r = g(f) - x; corrections solve f1^k g_k = -r_k.
        let comp = g.compose(std::slice::from_ref(f))?;
        let mut residual = comp;
        let x1 = MultiIndex::single(1);
        residual.set(x1.clone(), residual.coeff(&x1) - T::one());
        let mut changed = false;
        for k in 2..=n {
            let jk = MultiIndex::repeated(1, k);
            let r = residual.coeff(&jk);
            if !r.is_zero() {
                let mut f1k = T::one();
                for _ in 0..k {
                    f1k = f1k * f1.clone();
                }
                let cur = g.coeff(&jk);
                g.set(jk, cur - r / f1k);
                changed = true;
                break;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(g)
}

/// JSON form of a series: exact fraction strings keyed by multi-index.
#[derive(Serialize, Deserialize)]
pub struct SeriesJson {
    pub vars: usize,
    pub order: usize,
    pub terms: Vec<SeriesTermJson>,
}

#[derive(Serialize, Deserialize)]
pub struct SeriesTermJson {
    pub index: Vec<u8>,
    pub coeff: String,
}

impl Series {
    pub fn to_json(&self) -> SeriesJson {
        SeriesJson {
            vars: self.num_vars(),
            order: self.truncation_order(),
            terms: self
                .terms()
                .map(|(j, c)| SeriesTermJson {
                    index: j.entries().to_vec(),
                    coeff: rat_to_string(c),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &SeriesJson) -> Option<Series> {
        let mut s = Series::zero(json.vars, json.order);
        for term in &json.terms {
            let c = rat_from_str(&term.coeff)?;
            s.set(MultiIndex::new(term.index.clone()), c);
        }
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    fn mi(entries: &[u8]) -> MultiIndex {
        MultiIndex::new(entries.to_vec())
    }

    fn one_plus_x(n: usize) -> Series {
        let mut s = Series::constant(2, n, rat_int(1));
        s.set(mi(&[1]), rat_int(1));
        s
    }

    #[test]
    fn mul_difference_of_squares() {
        let mut a = Series::constant(1, 3, rat_int(1));
        a.set(mi(&[1]), rat_int(1));
        let mut b = Series::constant(1, 3, rat_int(1));
        b.set(mi(&[1]), rat_int(-1));
        let p = a.mul(&b).unwrap();
        let mut expect = Series::constant(1, 3, rat_int(1));
        expect.set(mi(&[1, 1]), rat_int(-1));
        assert_eq!(p, expect);
    }

    #[test]
    fn mul_truncation_kills_high_order() {
        let mut a = Series::zero(1, 3);
        a.set(mi(&[1, 1]), rat(1, 2));
        let p = a.mul(&a).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn mul_square_of_sum() {
        // (1+x+y)^2 at order 2, expanded by hand.
        let mut a = Series::constant(2, 2, rat_int(1));
        a.set(mi(&[1]), rat_int(1));
        a.set(mi(&[2]), rat_int(1));
        let p = a.mul(&a).unwrap();
        let pairs = [
            (mi(&[]), 1),
            (mi(&[1]), 2),
            (mi(&[2]), 2),
            (mi(&[1, 1]), 1),
            (mi(&[1, 2]), 2),
            (mi(&[2, 2]), 1),
        ];
        for (j, c) in pairs {
            assert_eq!(p.coeff(&j), rat_int(c), "{j}");
        }
    }

    #[test]
    fn invert_geometric() {
        let mut a = Series::constant(1, 3, rat_int(1));
        a.set(mi(&[1]), rat_int(-1));
        let inv = a.invert().unwrap();
        for k in 0..=3 {
            assert_eq!(inv.coeff(&MultiIndex::repeated(1, k)), rat_int(1));
        }
    }

    #[test]
    fn invert_constant() {
        let a = Series::constant(1, 2, rat_int(2));
        assert_eq!(a.invert().unwrap().coeff(&mi(&[])), rat(1, 2));
    }

    #[test]
    fn invert_two_vars() {
        let mut a = Series::constant(2, 2, rat_int(1));
        a.set(mi(&[1]), rat_int(1));
        a.set(mi(&[2]), rat_int(1));
        let inv = a.invert().unwrap();
        let product = a.mul(&inv).unwrap();
        assert_eq!(product, Series::constant(2, 2, rat_int(1)));
        assert_eq!(inv.coeff(&mi(&[1])), rat_int(-1));
        assert_eq!(inv.coeff(&mi(&[1, 2])), rat_int(2));
    }

    #[test]
    fn sqrt_round_trips() {
        let mut a = Series::constant(1, 2, rat_int(1));
        a.set(mi(&[1]), rat_int(2));
        let r = a.sqrt().unwrap();
        assert_eq!(r.coeff(&mi(&[1])), rat_int(1));
        assert_eq!(r.coeff(&mi(&[1, 1])), rat(-1, 2));
        assert_eq!(r.mul(&r).unwrap(), a);

        let c = Series::constant(1, 0, rat_int(4));
        assert_eq!(c.sqrt().unwrap().coeff(&mi(&[])), rat_int(2));

        let mut d = Series::constant(1, 1, rat_int(9));
        d.set(mi(&[1]), rat_int(18));
        let r = d.sqrt().unwrap();
        assert_eq!(r.coeff(&mi(&[])), rat_int(3));
        assert_eq!(r.coeff(&mi(&[1])), rat_int(3));
    }

    #[test]
    fn sqrt_rejects_bad_constants() {
        let a = Series::constant(1, 1, rat_int(-1));
        assert_eq!(a.sqrt(), Err(SeriesError::NonPositiveConstant));
        let b = Series::constant(1, 1, rat_int(2));
        assert_eq!(b.sqrt(), Err(SeriesError::IrrationalRoot));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Series::zero(1, 2);
        let b = Series::zero(2, 2);
        assert!(matches!(a.mul(&b), Err(SeriesError::ShapeMismatch(..))));
    }

    #[test]
    fn derivative_and_eval() {
        let s = one_plus_x(3);
        let d = s.derivative(1);
        assert_eq!(d.coeff(&mi(&[])), rat_int(1));
        assert_eq!(s.eval(&[rat_int(2), rat_int(5)]), rat_int(3));
    }

    #[test]
    fn compose_and_reversion() {
        // f(x) = x + x^2; g = rev(f); g(f(x)) = x.
        let mut f = Series::zero(1, 6);
        f.set(mi(&[1]), rat_int(1));
        f.set(mi(&[1, 1]), rat_int(1));
        let g = reversion(&f).unwrap();
        let comp = g.compose(std::slice::from_ref(&f)).unwrap();
        let mut x = Series::zero(1, 6);
        x.set(mi(&[1]), rat_int(1));
        assert_eq!(comp, x);
    }

    #[test]
    fn json_round_trip() {
        let mut s = Series::zero(2, 3);
        s.set(mi(&[1, 2]), rat(-3, 7));
        s.set(mi(&[]), rat_int(2));
        let back = Series::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }
}
