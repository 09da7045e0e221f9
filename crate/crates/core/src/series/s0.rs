//! The rescaled space of ħ-graded polynomials and its x-side counterpart.

use std::collections::BTreeMap;

use crate::error::{QmfError, Result};
use crate::scalar::Scalar;

use super::{FiberPoly, FormalScalarSeries, HalfInt, MultiIndex, Poly};

/// `Σ_j ħ^{j-K} P_j(y)` with `deg P_j ≤ 2j`, known through `j ≤ prec`.
#[derive(Debug, Clone, PartialEq)]
pub struct S0Series<S> {
    n: usize,
    rank: usize,
    k: HalfInt,
    coeffs: BTreeMap<HalfInt, FiberPoly<S>>,
    prec: HalfInt,
}

impl<S: Scalar> S0Series<S> {
    pub fn zero(n: usize, rank: usize, k: HalfInt, prec: HalfInt) -> Self {
        S0Series {
            n,
            rank,
            k,
            coeffs: BTreeMap::new(),
            prec,
        }
    }

    /// Builds a series from `(j, P_j)` pairs, enforcing the degree invariant.
    pub fn from_terms(
        n: usize,
        rank: usize,
        k: HalfInt,
        prec: HalfInt,
        terms: impl IntoIterator<Item = (HalfInt, FiberPoly<S>)>,
    ) -> Result<Self> {
        let mut s = Self::zero(n, rank, k, prec);
        for (j, p) in terms {
            s.add_at(j, &p)?;
        }
        Ok(s)
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The offset `K` of the leading factor ħ^{-K}.
    pub fn offset(&self) -> HalfInt {
        self.k
    }

    pub fn prec(&self) -> HalfInt {
        self.prec
    }

    /// Absolute ħ exponent of the coefficient with index `j`.
    pub fn exponent(&self, j: HalfInt) -> HalfInt {
        j - self.k
    }

    /// Truncation expressed as an absolute ħ exponent.
    pub fn abs_prec(&self) -> HalfInt {
        self.prec - self.k
    }

    pub fn coeffs(&self) -> &BTreeMap<HalfInt, FiberPoly<S>> {
        &self.coeffs
    }

    pub fn coeff(&self, j: HalfInt) -> FiberPoly<S> {
        self.coeffs.get(&j).cloned().unwrap_or_else(|| FiberPoly::zero(self.n, self.rank))
    }

    /// Coefficient at absolute exponent `e`.
    pub fn at_exponent(&self, e: HalfInt) -> FiberPoly<S> {
        self.coeff(e + self.k)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Adds `P` to the coefficient at index `j`; ignored beyond the truncation.
    pub fn add_at(&mut self, j: HalfInt, p: &FiberPoly<S>) -> Result<()> {
        if p.rank() != self.rank || p.nvars() != self.n {
            return Err(QmfError::Dimension("fiber polynomial does not match the series".into()));
        }
        if j > self.prec || p.is_zero() {
            return Ok(());
        }
        if j < HalfInt::ZERO {
            return Err(QmfError::DegreeInvariant {
                j,
                degree: p.degree().unwrap_or(0),
                bound: 0,
            });
        }
        if let Some(d) = p.degree() {
            let bound = j.doubled as usize;
            if d > bound {
                return Err(QmfError::DegreeInvariant { j, degree: d, bound });
            }
        }
        let sum = match self.coeffs.get(&j) {
            Some(old) => old + p,
            None => p.clone(),
        };
        if sum.is_zero() {
            self.coeffs.remove(&j);
        } else {
            self.coeffs.insert(j, sum);
        }
        Ok(())
    }

    /// Re-checks `deg P_j ≤ 2j` on every stored coefficient.
    pub fn check_invariant(&self) -> Result<()> {
        for (j, p) in &self.coeffs {
            let bound = j.doubled.max(0) as usize;
            if *j < HalfInt::ZERO || p.degree().is_some_and(|d| d > bound) {
                return Err(QmfError::DegreeInvariant {
                    j: *j,
                    degree: p.degree().unwrap_or(0),
                    bound,
                });
            }
        }
        Ok(())
    }

    pub fn truncate(&self, prec: HalfInt) -> Self {
        let prec = prec.min(self.prec);
        S0Series {
            n: self.n,
            rank: self.rank,
            k: self.k,
            coeffs: self.coeffs.range(..=prec).map(|(j, p)| (*j, p.clone())).collect(),
            prec,
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero(self.n, self.rank, self.k, self.prec);
        for (j, p) in &self.coeffs {
            let q = p.scale(c);
            if !q.is_zero() {
                out.coeffs.insert(*j, q);
            }
        }
        out
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> S0Series<T> {
        let mut out = S0Series::zero(self.n, self.rank, self.k, self.prec);
        for (j, p) in &self.coeffs {
            let q = p.map(f);
            if !q.is_zero() {
                out.coeffs.insert(*j, q);
            }
        }
        out
    }

    /// Multiplies by a scalar series in non-negative powers of ħ^{1/2}.
    pub fn mul_scalar_series(&self, c: &FormalScalarSeries<S>) -> Result<Self> {
        if c.valuation().is_some_and(|v| v < HalfInt::ZERO) {
            return Err(QmfError::Invalid("multiplier must not contain negative powers".into()));
        }
        let val_u = self.coeffs.keys().next().copied().unwrap_or(self.prec + HalfInt::HALF);
        let val_c = c.valuation().unwrap_or(c.prec() + HalfInt::HALF);
        let prec = (self.prec + val_c).min(c.prec() + val_u);
        let mut out = Self::zero(self.n, self.rank, self.k, prec);
        for (j, p) in &self.coeffs {
            for (e, v) in c.terms() {
                if *j + e <= prec {
                    out.add_at(*j + e, &p.scale(v))?;
                }
            }
        }
        Ok(out)
    }

    /// Re-expresses the series with a larger offset `K' ≥ K`.
    pub fn with_offset(&self, k: HalfInt) -> Result<Self> {
        if k < self.k {
            return Err(QmfError::Invalid("offset can only grow".into()));
        }
        let d = k - self.k;
        Ok(S0Series {
            n: self.n,
            rank: self.rank,
            k,
            coeffs: self.coeffs.iter().map(|(j, p)| (*j + d, p.clone())).collect(),
            prec: self.prec + d,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|p| p.max_abs()).fold(0.0, f64::max)
    }

    fn combine(&self, o: &Self, sign: S) -> Result<Self> {
        if self.n != o.n || self.rank != o.rank {
            return Err(QmfError::Dimension("series shapes differ".into()));
        }
        let k = self.k.max(o.k);
        let a = self.with_offset(k)?;
        let b = o.with_offset(k)?;
        let mut out = Self::zero(self.n, self.rank, k, a.prec.min(b.prec));
        for (j, p) in &a.coeffs {
            out.add_at(*j, p)?;
        }
        for (j, p) in &b.coeffs {
            out.add_at(*j, &p.scale(&sign))?;
        }
        Ok(out)
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.combine(o, S::one())
    }

    pub fn try_sub(&self, o: &Self) -> Result<Self> {
        self.combine(o, -S::one())
    }
}

/// `Σ_k ħ^{k-K} u_k(x)` with Taylor coefficients in the fiber.
///
/// A coefficient `(k, α)` is meaningful when `k ≤ order` and `|α| ≤ x_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct XJetSeries<S> {
    n: usize,
    rank: usize,
    k: HalfInt,
    coeffs: BTreeMap<HalfInt, FiberPoly<S>>,
    x_degree: usize,
    order: HalfInt,
}

impl<S: Scalar> XJetSeries<S> {
    pub fn new(n: usize, rank: usize, k: HalfInt, x_degree: usize, order: HalfInt) -> Self {
        XJetSeries {
            n,
            rank,
            k,
            coeffs: BTreeMap::new(),
            x_degree,
            order,
        }
    }

    /// Adds `p · ħ^{k-K}`, truncated to the x-degree.
    pub fn add_at(&mut self, k: HalfInt, p: &FiberPoly<S>) {
        if k > self.order || k < HalfInt::ZERO {
            return;
        }
        let p = p.truncate(self.x_degree);
        let sum = match self.coeffs.get(&k) {
            Some(old) => old + &p,
            None => p,
        };
        if sum.is_zero() {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, sum);
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn offset(&self) -> HalfInt {
        self.k
    }

    pub fn x_degree(&self) -> usize {
        self.x_degree
    }

    pub fn order(&self) -> HalfInt {
        self.order
    }

    pub fn coeffs(&self) -> &BTreeMap<HalfInt, FiberPoly<S>> {
        &self.coeffs
    }

    pub fn coeff(&self, k: HalfInt) -> FiberPoly<S> {
        self.coeffs.get(&k).cloned().unwrap_or_else(|| FiberPoly::zero(self.n, self.rank))
    }

    /// Highest x-degree of `u_k` that the truncation determines.
    pub fn known_degree(&self, k: HalfInt) -> usize {
        let tri = (self.order - k).doubled.max(0) as usize;
        tri.min(self.x_degree)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> XJetSeries<T> {
        XJetSeries {
            n: self.n,
            rank: self.rank,
            k: self.k,
            coeffs: self.coeffs.iter().map(|(k, p)| (*k, p.map(f))).collect(),
            x_degree: self.x_degree,
            order: self.order,
        }
    }
}

/// x^α ħ^{k-K} ↦ ħ^{k+|α|/2-K} y^α.
pub fn rescale<S: Scalar>(u: &XJetSeries<S>) -> S0Series<S> {
    let prec = u.order.min(HalfInt::from_doubled(u.x_degree as i64));
    let mut out = S0Series::zero(u.n, u.rank, u.k, prec);
    for (k, p) in &u.coeffs {
        for (c, comp) in p.components().iter().enumerate() {
            for (alpha, v) in comp.terms() {
                let j = *k + HalfInt::from_doubled(alpha.degree() as i64);
                if j <= prec {
                    let mono = FiberPoly::unit(Poly::monomial(alpha.clone(), v.clone()), u.rank, c);
                    out.add_at(j, &mono).expect("rescaled monomials satisfy the degree bound");
                }
            }
        }
    }
    out
}

/// Inverse of [`rescale`]; rejects inputs violating `deg P_j ≤ 2j`.
pub fn unrescale<S: Scalar>(v: &S0Series<S>) -> Result<XJetSeries<S>> {
    v.check_invariant()?;
    let order = v.prec;
    let x_degree = order.doubled.max(0) as usize;
    let mut out = XJetSeries::new(v.n, v.rank, v.k, x_degree, order);
    for (j, p) in &v.coeffs {
        for (c, comp) in p.components().iter().enumerate() {
            for (alpha, val) in comp.terms() {
                let k = *j - HalfInt::from_doubled(alpha.degree() as i64);
                let mono = FiberPoly::unit(Poly::monomial(alpha.clone(), val.clone()), v.rank, c);
                out.add_at(k, &mono);
            }
        }
    }
    Ok(out)
}

/// Lowest total degree of the monomials in `p`, or `None` for zero.
pub fn lowest_degree<S: Scalar>(p: &FiberPoly<S>) -> Option<usize> {
    p.min_degree()
}

/// Shorthand for a scalar monomial `c·y^α` in `n` variables as a rank-one fiber polynomial.
pub fn scalar_monomial<S: Scalar>(alpha: Vec<u32>, c: S) -> FiberPoly<S> {
    let a = MultiIndex::new(alpha);
    FiberPoly::unit(Poly::monomial(a, c), 1, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64) -> Rational {
        Rational::from_i64(a)
    }

    #[test]
    fn rescale_x_squared() {
        let mut u = XJetSeries::new(1, 1, HalfInt::ZERO, 4, HalfInt::int(2));
        u.add_at(HalfInt::ZERO, &scalar_monomial(vec![2], q(1)));
        let v = rescale(&u);
        assert_eq!(v.coeff(HalfInt::ONE), scalar_monomial(vec![2], q(1)));
        assert_eq!(v.exponent(HalfInt::ONE), HalfInt::ONE);
    }

    #[test]
    fn unrescale_rejects_degree_violation() {
        let mut v = S0Series::<Rational>::zero(1, 1, HalfInt::ZERO, HalfInt::int(2));
        assert!(v.add_at(HalfInt::HALF, &scalar_monomial(vec![2], q(1))).is_err());
        v.coeffs.insert(HalfInt::HALF, scalar_monomial(vec![2], q(1)));
        assert!(unrescale(&v).is_err());
    }

    #[test]
    fn half_offset_monomial() {
        // y at ħ^{1/2-K} with K = 1/2 maps to x at ħ^{-1/2}.
        let mut v = S0Series::zero(1, 1, HalfInt::HALF, HalfInt::int(2));
        v.add_at(HalfInt::HALF, &scalar_monomial(vec![1], q(1))).unwrap();
        let u = unrescale(&v).unwrap();
        assert_eq!(u.coeff(HalfInt::ZERO), scalar_monomial(vec![1], q(1)));
        assert_eq!(u.offset(), HalfInt::HALF);
    }
}
