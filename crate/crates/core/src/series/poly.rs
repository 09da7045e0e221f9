//! Multivariate polynomials with scalar, vector (fiber) and matrix values.

use std::collections::BTreeMap;

use crate::error::{QmfError, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

use super::MultiIndex;

/// Scalar polynomial in `n` variables. Absent keys are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S> {
    n: usize,
    terms: BTreeMap<MultiIndex, S>,
}

impl<S: Scalar> Poly<S> {
    pub fn zero(n: usize) -> Self {
        Poly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: S) -> Self {
        Self::monomial(MultiIndex::zeros(n), c)
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, S::one())
    }

    pub fn monomial(alpha: MultiIndex, c: S) -> Self {
        let mut p = Poly::zero(alpha.dim());
        p.add_term(alpha, c);
        p
    }

    pub fn var(n: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(n, i), S::one())
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (MultiIndex, S)>) -> Self {
        let mut p = Poly::zero(n);
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &S)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> S {
        self.terms.get(alpha).cloned().unwrap_or_else(S::zero)
    }

    /// Adds `c·y^α`, dropping the entry if it cancels.
    pub fn add_term(&mut self, alpha: MultiIndex, c: S) {
        debug_assert_eq!(alpha.dim(), self.n);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&alpha) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.terms.remove(&alpha);
                } else {
                    *v = s;
                }
            }
            None => {
                self.terms.insert(alpha, c);
            }
        }
    }

    /// Largest total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(|a| a.degree()).max()
    }

    /// Smallest total degree; `None` for the zero polynomial.
    pub fn min_degree(&self) -> Option<usize> {
        self.terms.keys().map(|a| a.degree()).min()
    }

    pub fn scale(&self, c: &S) -> Self {
        if c.is_zero() {
            return Poly::zero(self.n);
        }
        Poly::from_terms(self.n, self.terms.iter().map(|(a, v)| (a.clone(), v.clone() * c.clone())))
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Poly<T> {
        Poly::from_terms(self.n, self.terms.iter().map(|(a, v)| (a.clone(), f(v))))
    }

    /// Product keeping only terms of degree at most `max_degree`.
    pub fn mul_trunc(&self, other: &Poly<S>, max_degree: usize) -> Self {
        let mut out = Poly::zero(self.n);
        for (a, x) in &self.terms {
            let da = a.degree();
            if da > max_degree {
                continue;
            }
            for (b, y) in &other.terms {
                if da + b.degree() <= max_degree {
                    out.add_term(a.add(b), x.clone() * y.clone());
                }
            }
        }
        out
    }

    pub fn truncate(&self, max_degree: usize) -> Self {
        Poly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| a.degree() <= max_degree)
                .map(|(a, v)| (a.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn homogeneous(&self, d: usize) -> Self {
        Poly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(a, _)| a.degree() == d)
                .map(|(a, v)| (a.clone(), v.clone()))
                .collect(),
        }
    }

    /// ∂/∂y_i
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Poly::zero(self.n);
        for (a, v) in &self.terms {
            let e = a.get(i);
            if e > 0 {
                out.add_term(a.with(i, e - 1), v.clone() * S::from_i64(e as i64));
            }
        }
        out
    }

    /// ∂^β
    pub fn derivative_multi(&self, beta: &MultiIndex) -> Self {
        let mut out = Poly::zero(self.n);
        for (a, v) in &self.terms {
            let Some(rest) = a.checked_sub(beta) else {
                continue;
            };
            let mut f = v.clone();
            for i in 0..self.n {
                for t in 0..beta.get(i) {
                    f = f * S::from_i64((a.get(i) - t) as i64);
                }
            }
            out.add_term(rest, f);
        }
        out
    }

    /// Multiplies by the monomial `y^α`.
    pub fn shift(&self, alpha: &MultiIndex) -> Self {
        Poly {
            n: self.n,
            terms: self.terms.iter().map(|(a, v)| (a.add(alpha), v.clone())).collect(),
        }
    }

    pub fn eval_f64(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, v)| {
                v.to_f64()
                    * a.entries()
                        .iter()
                        .zip(y)
                        .map(|(&e, &x)| x.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// `Some(+1)` if every term has even degree, `Some(-1)` if every term is odd.
    pub fn parity(&self) -> Option<i32> {
        let mut it = self.terms.keys().map(|a| a.parity());
        let first = it.next().unwrap_or(1);
        it.all(|p| p == first).then_some(first)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|v| v.abs_f64()).fold(0.0, f64::max)
    }

    /// Power series `(1 + u)^e` for a polynomial `u` without constant term.
    pub fn binomial_power(u: &Poly<S>, exponent: S, max_degree: usize) -> Result<Self> {
        if !u.coeff(&MultiIndex::zeros(u.n)).is_zero() {
            return Err(QmfError::Invalid("binomial series needs a zero constant term".into()));
        }
        let mut out = Poly::one(u.n);
        let mut power = Poly::one(u.n);
        let mut coeff = S::one();
        let min_deg = u.min_degree().unwrap_or(max_degree + 1).max(1);
        for k in 1..=(max_degree / min_deg) {
            power = power.mul_trunc(u, max_degree);
            if power.is_zero() {
                break;
            }
            coeff = coeff * (exponent.clone() - S::from_i64(k as i64 - 1)) / S::from_i64(k as i64);
            out = &out + &power.scale(&coeff);
        }
        Ok(out)
    }
}

impl<S: Scalar> std::ops::Add for &Poly<S> {
    type Output = Poly<S>;
    fn add(self, o: &Poly<S>) -> Poly<S> {
        let mut out = self.clone();
        for (a, v) in &o.terms {
            out.add_term(a.clone(), v.clone());
        }
        out
    }
}

impl<S: Scalar> std::ops::Sub for &Poly<S> {
    type Output = Poly<S>;
    fn sub(self, o: &Poly<S>) -> Poly<S> {
        let mut out = self.clone();
        for (a, v) in &o.terms {
            out.add_term(a.clone(), -v.clone());
        }
        out
    }
}

impl<S: Scalar> std::ops::Mul for &Poly<S> {
    type Output = Poly<S>;
    fn mul(self, o: &Poly<S>) -> Poly<S> {
        self.mul_trunc(o, usize::MAX)
    }
}

impl<S: Scalar> std::ops::Neg for &Poly<S> {
    type Output = Poly<S>;
    fn neg(self) -> Poly<S> {
        self.map(|v| -v.clone())
    }
}

/// Polynomial with values in the fiber `ℝ^rank`, stored componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberPoly<S> {
    comps: Vec<Poly<S>>,
    n: usize,
}

impl<S: Scalar> FiberPoly<S> {
    pub fn zero(n: usize, rank: usize) -> Self {
        FiberPoly {
            comps: vec![Poly::zero(n); rank],
            n,
        }
    }

    pub fn from_components(n: usize, comps: Vec<Poly<S>>) -> Self {
        FiberPoly { comps, n }
    }

    /// `p · e_k`
    pub fn unit(p: Poly<S>, rank: usize, k: usize) -> Self {
        let mut f = FiberPoly::zero(p.nvars(), rank);
        f.comps[k] = p;
        f
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, k: usize) -> &Poly<S> {
        &self.comps[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut Poly<S> {
        &mut self.comps[k]
    }

    pub fn components(&self) -> &[Poly<S>] {
        &self.comps
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|p| p.is_zero())
    }

    pub fn degree(&self) -> Option<usize> {
        self.comps.iter().filter_map(|p| p.degree()).max()
    }

    pub fn min_degree(&self) -> Option<usize> {
        self.comps.iter().filter_map(|p| p.min_degree()).min()
    }

    /// The association α ↦ fiber column, for every α carrying a nonzero entry.
    pub fn columns(&self) -> BTreeMap<MultiIndex, Vec<S>> {
        let mut out: BTreeMap<MultiIndex, Vec<S>> = BTreeMap::new();
        for (k, p) in self.comps.iter().enumerate() {
            for (a, v) in p.terms() {
                out.entry(a.clone()).or_insert_with(|| vec![S::zero(); self.rank()])[k] = v.clone();
            }
        }
        out
    }

    pub fn scale(&self, c: &S) -> Self {
        FiberPoly {
            comps: self.comps.iter().map(|p| p.scale(c)).collect(),
            n: self.n,
        }
    }

    pub fn mul_poly(&self, p: &Poly<S>, max_degree: usize) -> Self {
        FiberPoly {
            comps: self.comps.iter().map(|c| c.mul_trunc(p, max_degree)).collect(),
            n: self.n,
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> FiberPoly<T> {
        FiberPoly {
            comps: self.comps.iter().map(|p| p.map(f)).collect(),
            n: self.n,
        }
    }

    pub fn truncate(&self, max_degree: usize) -> Self {
        FiberPoly {
            comps: self.comps.iter().map(|p| p.truncate(max_degree)).collect(),
            n: self.n,
        }
    }

    pub fn homogeneous(&self, d: usize) -> Self {
        FiberPoly {
            comps: self.comps.iter().map(|p| p.homogeneous(d)).collect(),
            n: self.n,
        }
    }

    pub fn parity(&self) -> Option<i32> {
        let ps: Vec<i32> = self.comps.iter().filter(|p| !p.is_zero()).filter_map(|p| p.parity()).collect();
        let nonzero = self.comps.iter().filter(|p| !p.is_zero()).count();
        if ps.len() != nonzero {
            return None;
        }
        match ps.first() {
            None => Some(1),
            Some(&f) => ps.iter().all(|&p| p == f).then_some(f),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|p| p.max_abs()).fold(0.0, f64::max)
    }

    pub fn check_rank(&self, other: &FiberPoly<S>) -> Result<()> {
        if self.rank() != other.rank() || self.n != other.n {
            return Err(QmfError::Dimension(format!(
                "fiber polynomials of shape ({}, {}) and ({}, {})",
                self.n,
                self.rank(),
                other.n,
                other.rank()
            )));
        }
        Ok(())
    }
}

impl<S: Scalar> std::ops::Add for &FiberPoly<S> {
    type Output = FiberPoly<S>;
    fn add(self, o: &FiberPoly<S>) -> FiberPoly<S> {
        assert_eq!(self.rank(), o.rank());
        FiberPoly {
            comps: self.comps.iter().zip(&o.comps).map(|(a, b)| a + b).collect(),
            n: self.n,
        }
    }
}

impl<S: Scalar> std::ops::Sub for &FiberPoly<S> {
    type Output = FiberPoly<S>;
    fn sub(self, o: &FiberPoly<S>) -> FiberPoly<S> {
        assert_eq!(self.rank(), o.rank());
        FiberPoly {
            comps: self.comps.iter().zip(&o.comps).map(|(a, b)| a - b).collect(),
            n: self.n,
        }
    }
}

/// Polynomial with values in `rank × rank` matrices, stored entrywise (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MatPoly<S> {
    rank: usize,
    n: usize,
    entries: Vec<Poly<S>>,
}

impl<S: Scalar> MatPoly<S> {
    pub fn zero(n: usize, rank: usize) -> Self {
        MatPoly {
            rank,
            n,
            entries: vec![Poly::zero(n); rank * rank],
        }
    }

    pub fn identity(n: usize, rank: usize) -> Self {
        Self::scalar_poly(&Poly::one(n), rank)
    }

    /// `p · 1`
    pub fn scalar_poly(p: &Poly<S>, rank: usize) -> Self {
        let mut m = MatPoly::zero(p.nvars(), rank);
        for k in 0..rank {
            m.entries[k * rank + k] = p.clone();
        }
        m
    }

    pub fn from_constant(m: &Mat<S>, n: usize) -> Self {
        let rank = m.rows();
        let mut out = MatPoly::zero(n, rank);
        for i in 0..rank {
            for j in 0..rank {
                out.entries[i * rank + j] = Poly::constant(n, m[(i, j)].clone());
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly<S> {
        &self.entries[i * self.rank + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Poly<S> {
        &mut self.entries[i * self.rank + j]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|p| p.is_zero())
    }

    pub fn degree(&self) -> Option<usize> {
        self.entries.iter().filter_map(|p| p.degree()).max()
    }

    /// Value at the origin.
    pub fn at_origin(&self) -> Mat<S> {
        let z = MultiIndex::zeros(self.n);
        Mat::from_fn(self.rank, self.rank, |i, j| self.entry(i, j).coeff(&z))
    }

    /// Coefficient matrix of the monomial `y^α`.
    pub fn coeff(&self, alpha: &MultiIndex) -> Mat<S> {
        Mat::from_fn(self.rank, self.rank, |i, j| self.entry(i, j).coeff(alpha))
    }

    pub fn map_entries(&self, f: impl Fn(&Poly<S>) -> Poly<S>) -> Self {
        MatPoly {
            rank: self.rank,
            n: self.n,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> MatPoly<T> {
        MatPoly {
            rank: self.rank,
            n: self.n,
            entries: self.entries.iter().map(|p| p.map(f)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = MatPoly::zero(self.n, self.rank);
        for i in 0..self.rank {
            for j in 0..self.rank {
                out.entries[j * self.rank + i] = self.entry(i, j).clone();
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.rank).all(|i| (0..i).all(|j| (self.entry(i, j) - self.entry(j, i)).is_zero()))
    }

    pub fn is_antisymmetric(&self) -> bool {
        (0..self.rank).all(|i| (0..=i).all(|j| (self.entry(i, j) + self.entry(j, i)).is_zero()))
    }

    pub fn mul_trunc(&self, o: &MatPoly<S>, max_degree: usize) -> Self {
        let r = self.rank;
        let mut out = MatPoly::zero(self.n, r);
        for i in 0..r {
            for j in 0..r {
                let mut acc = Poly::zero(self.n);
                for k in 0..r {
                    let a = self.entry(i, k);
                    let b = o.entry(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &a.mul_trunc(b, max_degree);
                    }
                }
                out.entries[i * r + j] = acc;
            }
        }
        out
    }

    pub fn mul_poly(&self, p: &Poly<S>, max_degree: usize) -> Self {
        self.map_entries(|e| e.mul_trunc(p, max_degree))
    }

    pub fn apply(&self, v: &FiberPoly<S>, max_degree: usize) -> FiberPoly<S> {
        let r = self.rank;
        let comps = (0..r)
            .map(|i| {
                let mut acc = Poly::zero(self.n);
                for k in 0..r {
                    let a = self.entry(i, k);
                    if !a.is_zero() && !v.component(k).is_zero() {
                        acc = &acc + &a.mul_trunc(v.component(k), max_degree);
                    }
                }
                acc
            })
            .collect();
        FiberPoly::from_components(self.n, comps)
    }

    pub fn derivative(&self, i: usize) -> Self {
        self.map_entries(|e| e.derivative(i))
    }

    pub fn truncate(&self, max_degree: usize) -> Self {
        self.map_entries(|e| e.truncate(max_degree))
    }

    /// Conjugates the fiber frame: `Oᵀ · self · O` for a constant matrix `O`.
    pub fn conjugate(&self, o: &Mat<S>) -> Self {
        let r = self.rank;
        let mut out = MatPoly::zero(self.n, r);
        for i in 0..r {
            for j in 0..r {
                let mut acc = Poly::zero(self.n);
                for a in 0..r {
                    for b in 0..r {
                        let c = o[(a, i)].clone() * o[(b, j)].clone();
                        if !c.is_zero() {
                            acc = &acc + &self.entry(a, b).scale(&c);
                        }
                    }
                }
                out.entries[i * r + j] = acc;
            }
        }
        out
    }
}

impl<S: Scalar> std::ops::Add for &MatPoly<S> {
    type Output = MatPoly<S>;
    fn add(self, o: &MatPoly<S>) -> MatPoly<S> {
        MatPoly {
            rank: self.rank,
            n: self.n,
            entries: self.entries.iter().zip(&o.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<S: Scalar> std::ops::Sub for &MatPoly<S> {
    type Output = MatPoly<S>;
    fn sub(self, o: &MatPoly<S>) -> MatPoly<S> {
        MatPoly {
            rank: self.rank,
            n: self.n,
            entries: self.entries.iter().zip(&o.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64) -> Rational {
        Rational::from_i64(a)
    }

    #[test]
    fn derivative_and_product() {
        let x = Poly::<Rational>::var(1, 0);
        let x2 = &x * &x;
        assert_eq!(x2.derivative(0), x.scale(&q(2)));
        let x5 = Poly::monomial(MultiIndex::new(vec![5]), q(1));
        assert_eq!(
            x5.derivative_multi(&MultiIndex::new(vec![2])),
            Poly::monomial(MultiIndex::new(vec![3]), q(20))
        );
    }

    #[test]
    fn binomial_sqrt() {
        // (1 + t)^(1/2) = 1 + t/2 - t^2/8 + ...
        let t = Poly::<Rational>::var(1, 0);
        let s = Poly::binomial_power(&t, Rational::from_ratio(1, 2), 3).unwrap();
        let sq = s.mul_trunc(&s, 3);
        assert_eq!(sq, &Poly::one(1) + &t);
        assert_eq!(s.coeff(&MultiIndex::new(vec![2])), Rational::from_ratio(-1, 8));
    }
}
