//! Truncated Laurent series in ħ^{1/2} with scalar coefficients.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{QmfError, Result};
use crate::scalar::Scalar;

use super::HalfInt;

/// `Σ_i coeffs[i] ħ^{offset + i/2}`, known through the inclusive exponent `prec`.
///
/// The first stored coefficient is nonzero unless the series is zero; the zero
/// series has no coefficients and its offset is meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct FormalScalarSeries<S> {
    offset: HalfInt,
    coeffs: Vec<S>,
    prec: HalfInt,
}

impl<S: Scalar> FormalScalarSeries<S> {
    pub fn new(offset: HalfInt, coeffs: Vec<S>, prec: HalfInt) -> Self {
        let mut s = FormalScalarSeries { offset, coeffs, prec };
        s.normalize();
        s
    }

    pub fn zero(prec: HalfInt) -> Self {
        FormalScalarSeries {
            offset: HalfInt::ZERO,
            coeffs: Vec::new(),
            prec,
        }
    }

    pub fn constant(c: S, prec: HalfInt) -> Self {
        Self::new(HalfInt::ZERO, vec![c], prec)
    }

    pub fn monomial(exp: HalfInt, c: S, prec: HalfInt) -> Self {
        Self::new(exp, vec![c], prec)
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (HalfInt, S)>, prec: HalfInt) -> Self {
        let map: BTreeMap<HalfInt, S> = terms.into_iter().fold(BTreeMap::new(), |mut m, (e, c)| {
            let v = m.remove(&e).unwrap_or_else(S::zero) + c;
            m.insert(e, v);
            m
        });
        let Some((&lo, _)) = map.iter().next() else {
            return Self::zero(prec);
        };
        let hi = *map.keys().last().unwrap();
        let coeffs = HalfInt::range_inclusive(lo, hi)
            .map(|e| map.get(&e).cloned().unwrap_or_else(S::zero))
            .collect();
        Self::new(lo, coeffs, prec)
    }

    fn normalize(&mut self) {
        let keep = (self.prec.steps_from(self.offset) + 1).max(0) as usize;
        self.coeffs.truncate(keep);
        let lead = self.coeffs.iter().position(|c| !c.is_zero());
        match lead {
            None => self.coeffs.clear(),
            Some(k) => {
                self.coeffs.drain(..k);
                self.offset += HalfInt::from_doubled(k as i64);
                while self.coeffs.last().is_some_and(|c| c.is_zero()) {
                    self.coeffs.pop();
                }
            }
        }
        if self.coeffs.is_empty() {
            self.offset = HalfInt::ZERO;
        }
    }

    pub fn prec(&self) -> HalfInt {
        self.prec
    }

    pub fn offset(&self) -> HalfInt {
        self.offset
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Exponent of the leading nonzero term.
    pub fn valuation(&self) -> Option<HalfInt> {
        (!self.is_zero()).then_some(self.offset)
    }

    /// Lower bound on the valuation that remains valid beyond the truncation.
    fn valuation_bound(&self) -> HalfInt {
        self.valuation().unwrap_or(self.prec + HalfInt::HALF)
    }

    pub fn coeff(&self, e: HalfInt) -> S {
        let i = e.steps_from(self.offset);
        if i < 0 {
            return S::zero();
        }
        self.coeffs.get(i as usize).cloned().unwrap_or_else(S::zero)
    }

    /// Nonzero terms `(exponent, coefficient)` in ascending order.
    pub fn terms(&self) -> impl Iterator<Item = (HalfInt, &S)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(move |(i, c)| (self.offset + HalfInt::from_doubled(i as i64), c))
    }

    pub fn truncate(&self, prec: HalfInt) -> Self {
        Self::new(self.offset, self.coeffs.clone(), prec.min(self.prec))
    }

    pub fn with_prec(&self, prec: HalfInt) -> Self {
        Self::new(self.offset, self.coeffs.clone(), prec)
    }

    pub fn scale(&self, c: &S) -> Self {
        Self::new(self.offset, self.coeffs.iter().map(|v| v.clone() * c.clone()).collect(), self.prec)
    }

    /// Multiplies by ħ^e.
    pub fn shift(&self, e: HalfInt) -> Self {
        Self::new(self.offset + e, self.coeffs.clone(), self.prec + e)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FormalScalarSeries<T> {
        FormalScalarSeries::new(self.offset, self.coeffs.iter().map(f).collect(), self.prec)
    }

    pub fn conj(&self) -> Self {
        self.map(|c| c.conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs_f64()).fold(0.0, f64::max)
    }

    pub fn eval_f64(&self, hbar: f64) -> f64 {
        self.terms().map(|(e, c)| c.to_f64() * hbar.powf(e.to_f64())).sum()
    }

    pub fn series_mul(&self, o: &Self) -> Self {
        let prec = (self.prec + o.valuation_bound()).min(o.prec + self.valuation_bound());
        if self.is_zero() || o.is_zero() {
            return Self::zero(prec);
        }
        let offset = self.offset + o.offset;
        let len = (prec.steps_from(offset) + 1).max(0) as usize;
        let mut coeffs = vec![S::zero(); len.min(self.coeffs.len() + o.coeffs.len())];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                if i + j >= coeffs.len() {
                    break;
                }
                if !b.is_zero() {
                    coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
                }
            }
        }
        Self::new(offset, coeffs, prec)
    }

    /// `r` with `r·r·a = 1`, for `a = 1 + (positive powers)`.
    pub fn inverse_sqrt_series(&self) -> Result<Self> {
        self.binomial_power(S::from_ratio(-1, 2))
    }

    /// `a^{-1}` for `a = 1 + (positive powers)`.
    pub fn inverse_unit(&self) -> Result<Self> {
        self.binomial_power(S::from_i64(-1))
    }

    fn binomial_power(&self, exponent: S) -> Result<Self> {
        if self.valuation() != Some(HalfInt::ZERO) || !self.coeff(HalfInt::ZERO).is_one() {
            return Err(QmfError::LeadingTerm(format!(
                "series must start with 1, found {:?} at ħ^{}",
                self.coeffs.first(),
                self.offset
            )));
        }
        let prec = self.prec;
        let u = self - &Self::constant(S::one(), prec);
        let mut out = Self::constant(S::one(), prec);
        let mut power = Self::constant(S::one(), prec);
        let mut coeff = S::one();
        let mut k = 1i64;
        loop {
            power = power.series_mul(&u);
            if power.is_zero() || power.offset > prec {
                break;
            }
            coeff = coeff * (exponent.clone() - S::from_i64(k - 1)) / S::from_i64(k);
            out = &out + &power.scale(&coeff);
            k += 1;
        }
        Ok(out.with_prec(prec))
    }

    fn combine(&self, o: &Self, sign: S) -> Self {
        let prec = self.prec.min(o.prec);
        let terms = self
            .terms()
            .map(|(e, c)| (e, c.clone()))
            .chain(o.terms().map(|(e, c)| (e, c.clone() * sign.clone())))
            .filter(|(e, _)| *e <= prec);
        Self::from_terms(terms.collect::<Vec<_>>(), prec)
    }
}

impl<S: Scalar> std::ops::Add for &FormalScalarSeries<S> {
    type Output = FormalScalarSeries<S>;
    fn add(self, o: &FormalScalarSeries<S>) -> FormalScalarSeries<S> {
        self.combine(o, S::one())
    }
}

impl<S: Scalar> std::ops::Sub for &FormalScalarSeries<S> {
    type Output = FormalScalarSeries<S>;
    fn sub(self, o: &FormalScalarSeries<S>) -> FormalScalarSeries<S> {
        self.combine(o, -S::one())
    }
}

impl<S: Scalar> std::ops::Mul for &FormalScalarSeries<S> {
    type Output = FormalScalarSeries<S>;
    fn mul(self, o: &FormalScalarSeries<S>) -> FormalScalarSeries<S> {
        self.series_mul(o)
    }
}

impl<S: Scalar> fmt::Display for FormalScalarSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})ħ^{e}", c.display())?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(ħ^{})", self.prec + HalfInt::HALF)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    fn h(d: i64) -> HalfInt {
        HalfInt::from_doubled(d)
    }

    #[test]
    fn product_examples() {
        let p = h(8);
        let a = FormalScalarSeries::from_terms([(h(0), q(1, 1)), (h(2), q(1, 1))], p);
        let b = FormalScalarSeries::from_terms([(h(0), q(1, 1)), (h(2), q(-1, 1))], p);
        let ab = &a * &b;
        assert_eq!(ab, FormalScalarSeries::from_terms([(h(0), q(1, 1)), (h(4), q(-1, 1))], p));

        let m = FormalScalarSeries::monomial(h(-1), q(1, 1), p);
        let pl = FormalScalarSeries::monomial(h(1), q(1, 1), p);
        assert_eq!((&m * &pl).coeff(h(0)), q(1, 1));
        assert_eq!((&m * &pl).prec(), h(7));
    }

    #[test]
    fn inverse_sqrt_of_one_plus_two_hbar() {
        let a = FormalScalarSeries::from_terms([(h(0), q(1, 1)), (h(2), q(2, 1))], h(6));
        let r = a.inverse_sqrt_series().unwrap();
        assert_eq!(r.coeff(h(2)), q(-1, 1));
        assert_eq!(r.coeff(h(4)), q(3, 2));
        let one = &(&r * &r) * &a;
        assert_eq!(one, FormalScalarSeries::constant(q(1, 1), h(6)));
    }

    #[test]
    fn rejects_non_unit_leading_term() {
        let a = FormalScalarSeries::constant(q(2, 1), h(4));
        assert!(a.inverse_sqrt_series().is_err());
    }
}
