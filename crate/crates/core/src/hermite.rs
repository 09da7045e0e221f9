//! Eigenstructure of the model operator `Q₀ = Σ(−∂² + 2λy∂ + λ) + W(p)`.
//!
//! The basis is the product of monic scaled Hermite polynomials
//! `p_{m+1} = y p_m − m/(2λ) p_{m−1}`, which keeps every coefficient rational.
//! Squared norms against `e^{−⟨y,Λy⟩}`, with the common factor `∏√(π/λ_ν)`
//! divided out, are `∏ α_ν! / (2λ_ν)^{α_ν}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{QmfError, Result};
use crate::series::{FiberPoly, HalfInt, MultiIndex, Poly};
use crate::scalar::Scalar;

/// Label `(α, k)` of the eigenfunction `p_α e_k`; `k` is zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HermiteIndex {
    pub alpha: MultiIndex,
    pub k: usize,
}

impl HermiteIndex {
    pub fn new(alpha: Vec<u32>, k: usize) -> Self {
        HermiteIndex {
            alpha: MultiIndex::new(alpha),
            k,
        }
    }

    pub fn degree(&self) -> usize {
        self.alpha.degree()
    }
}

impl fmt::Display for HermiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.alpha, self.k + 1)
    }
}

/// `E_{α,k} = Σ(2α_ν+1)λ_ν + μ_k`.
pub fn harmonic_eigenvalue<S: Scalar>(lambda: &[S], mu: &[S], idx: &HermiteIndex) -> S {
    lambda
        .iter()
        .zip(idx.alpha.entries())
        .fold(mu[idx.k].clone(), |acc, (l, &a)| acc + l.clone() * S::from_i64(2 * a as i64 + 1))
}

#[derive(Debug, Clone)]
pub struct SpectrumTable<S> {
    pub lambda: Vec<S>,
    pub mu: Vec<S>,
    pub degree: usize,
    pub entries: Vec<(HermiteIndex, S)>,
}

pub fn build_spectrum<S: Scalar>(lambda: &[S], mu: &[S], degree: usize) -> SpectrumTable<S> {
    let mut entries = Vec::new();
    for alpha in MultiIndex::up_to_degree(lambda.len(), degree) {
        for k in 0..mu.len() {
            let idx = HermiteIndex { alpha: alpha.clone(), k };
            let e = harmonic_eigenvalue(lambda, mu, &idx);
            entries.push((idx, e));
        }
    }
    SpectrumTable {
        lambda: lambda.to_vec(),
        mu: mu.to_vec(),
        degree,
        entries,
    }
}

/// Relative tolerance used to cluster float eigenvalues of `Q₀`.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;

fn same_level<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    if S::EXACT {
        a.approx_eq(b)
    } else {
        let scale = a.abs_f64().max(b.abs_f64()).max(1.0);
        (a.to_f64() - b.to_f64()).abs() <= tol * scale
    }
}

impl<S: Scalar> SpectrumTable<S> {
    /// Distinct eigenvalues in ascending order.
    pub fn distinct_levels(&self, tol: f64) -> Vec<S> {
        let mut vals: Vec<S> = self.entries.iter().map(|(_, e)| e.clone()).collect();
        vals.sort_by(|a, b| {
            let d = a.clone() - b.clone();
            if d.is_zero() {
                std::cmp::Ordering::Equal
            } else {
                d.to_f64().partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal)
            }
        });
        let mut out: Vec<S> = Vec::new();
        for v in vals {
            if out.last().is_none_or(|l| !same_level(l, &v, tol)) {
                out.push(v);
            }
        }
        out
    }

    /// Lowest `E_{α,k}` among indices of degree above the table's bound.
    pub fn lowest_unlisted(&self) -> f64 {
        let n = self.lambda.len();
        let min_l = self.lambda.iter().map(|l| l.to_f64()).fold(f64::INFINITY, f64::min);
        let base: f64 = self.lambda.iter().map(|l| l.to_f64()).sum();
        let min_mu = self.mu.iter().map(|m| m.to_f64()).fold(f64::INFINITY, f64::min);
        if n == 0 {
            return f64::INFINITY;
        }
        base + 2.0 * min_l * (self.degree as f64 + 1.0) + min_mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelParity {
    Even,
    Odd,
    Mixed,
}

impl LevelParity {
    pub fn is_uniform(self) -> bool {
        self != LevelParity::Mixed
    }

    pub fn name(self) -> &'static str {
        match self {
            LevelParity::Even => "even",
            LevelParity::Odd => "odd",
            LevelParity::Mixed => "mixed",
        }
    }
}

/// Degenerate eigenspace of `Q₀` at `E₀`.
#[derive(Debug, Clone)]
pub struct DegenerateLevel<S> {
    pub e0: S,
    pub members: Vec<HermiteIndex>,
    pub m0: usize,
    /// `max |α|/2` over the members.
    pub k: HalfInt,
    pub parity: LevelParity,
}

/// How the user picks the level: by value, or by position among distinct levels.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSelector<S> {
    Value(S),
    Index(usize),
}

/// Collects `I_{E₀}`. Members are listed in ascending `(α, k)` order.
pub fn degenerate_level<S: Scalar>(table: &SpectrumTable<S>, e0: &S, tol: f64) -> Result<DegenerateLevel<S>> {
    let members: Vec<HermiteIndex> = table
        .entries
        .iter()
        .filter(|(_, e)| same_level(e, e0, tol))
        .map(|(i, _)| i.clone())
        .collect();
    if members.is_empty() {
        return Err(QmfError::NotInSpectrum(format!("{} is not an eigenvalue of the model operator", e0.display())));
    }
    if table.lowest_unlisted() <= e0.to_f64() + tol * e0.abs_f64().max(1.0) {
        return Err(QmfError::Truncation {
            required: table.degree + 1,
            available: table.degree,
        });
    }
    let max_deg = members.iter().map(|m| m.degree()).max().unwrap_or(0);
    let evens = members.iter().filter(|m| m.degree() % 2 == 0).count();
    let parity = if evens == members.len() {
        LevelParity::Even
    } else if evens == 0 {
        LevelParity::Odd
    } else {
        LevelParity::Mixed
    };
    Ok(DegenerateLevel {
        e0: e0.clone(),
        m0: members.len(),
        members,
        k: HalfInt::from_doubled(max_deg as i64),
        parity,
    })
}

/// Resolves a selector against the spectrum of `Q₀`, enlarging the table until the level is complete.
pub fn select_level<S: Scalar>(lambda: &[S], mu: &[S], selector: &LevelSelector<S>, tol: f64) -> Result<DegenerateLevel<S>> {
    let e0 = match selector {
        LevelSelector::Value(v) => v.clone(),
        LevelSelector::Index(i) => {
            // enough degrees that the first i+1 distinct levels are all listed
            let min_l = lambda.iter().map(|l| l.to_f64()).fold(f64::INFINITY, f64::min);
            let mut d = 2 * i + 2;
            loop {
                let table = build_spectrum(lambda, mu, d);
                let levels = table.distinct_levels(tol);
                if let Some(v) = levels.get(*i) {
                    if table.lowest_unlisted() > v.to_f64() + 1e-9 {
                        break v.clone();
                    }
                }
                d += 2;
                if d > 200 || !min_l.is_finite() {
                    return Err(QmfError::NotInSpectrum(format!("level index {i} could not be resolved")));
                }
            }
        }
    };
    let min_l = lambda.iter().map(|l| l.to_f64()).fold(f64::INFINITY, f64::min);
    let base: f64 = lambda.iter().map(|l| l.to_f64()).sum();
    let min_mu = mu.iter().map(|m| m.to_f64()).fold(f64::INFINITY, f64::min);
    let span = (e0.to_f64() - base - min_mu) / (2.0 * min_l);
    if !span.is_finite() || span < -1e-9 {
        return Err(QmfError::NotInSpectrum(format!("{} lies below the spectrum", e0.display())));
    }
    let degree = span.max(0.0).floor() as usize + 1;
    degenerate_level(&build_spectrum(lambda, mu, degree), &e0, tol)
}

/// Sparse coordinates over a [`HermiteBasis`], keyed by basis position.
pub type HermiteCoords<S> = BTreeMap<usize, S>;

pub fn coords_add<S: Scalar>(acc: &mut HermiteCoords<S>, idx: usize, v: S) {
    if v.is_zero() {
        return;
    }
    match acc.get_mut(&idx) {
        Some(old) => {
            let s = old.clone() + v;
            if s.is_zero() {
                acc.remove(&idx);
            } else {
                *old = s;
            }
        }
        None => {
            acc.insert(idx, v);
        }
    }
}

pub fn coords_axpy<S: Scalar>(acc: &mut HermiteCoords<S>, a: &S, x: &HermiteCoords<S>) {
    if a.is_zero() {
        return;
    }
    for (i, v) in x {
        coords_add(acc, *i, a.clone() * v.clone());
    }
}

/// Monic Hermite basis `{p_α e_k : |α| ≤ degree}` with rational recurrences.
#[derive(Debug, Clone)]
pub struct HermiteBasis<S> {
    n: usize,
    rank: usize,
    degree: usize,
    lambda: Vec<S>,
    mu: Vec<S>,
    index: Vec<HermiteIndex>,
    position: HashMap<HermiteIndex, usize>,
    /// `hermite[ν][m]`: monomial coefficients of `p_m` in direction ν.
    hermite: Vec<Vec<Vec<S>>>,
    /// `inverse[ν][m]`: coefficients of `y^m` over `p_0..p_m`.
    inverse: Vec<Vec<Vec<S>>>,
    /// `norms[ν][m] = m!/(2λ_ν)^m`.
    norms: Vec<Vec<S>>,
}

impl<S: Scalar> HermiteBasis<S> {
    pub fn new(lambda: &[S], mu: &[S], degree: usize) -> Self {
        let n = lambda.len();
        let rank = mu.len();
        let mut index = Vec::new();
        for alpha in MultiIndex::up_to_degree(n, degree) {
            for k in 0..rank {
                index.push(HermiteIndex { alpha: alpha.clone(), k });
            }
        }
        let position = index.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        let mut hermite = Vec::with_capacity(n);
        let mut inverse = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        for l in lambda {
            let two_l = S::from_i64(2) * l.clone();
            // p_{m+1} = y p_m − m/(2λ) p_{m−1}
            let mut ps: Vec<Vec<S>> = vec![vec![S::one()]];
            for m in 0..degree {
                let mut next = vec![S::zero(); m + 2];
                for (i, c) in ps[m].iter().enumerate() {
                    next[i + 1] = next[i + 1].clone() + c.clone();
                }
                if m > 0 {
                    let f = S::from_i64(m as i64) / two_l.clone();
                    for (i, c) in ps[m - 1].iter().enumerate() {
                        next[i] = next[i].clone() - f.clone() * c.clone();
                    }
                }
                ps.push(next);
            }
            // y p_j = p_{j+1} + j/(2λ) p_{j−1}
            let mut inv: Vec<Vec<S>> = vec![vec![S::one()]];
            for m in 0..degree {
                let mut next = vec![S::zero(); m + 2];
                for (j, c) in inv[m].iter().enumerate() {
                    if c.is_zero() {
                        continue;
                    }
                    next[j + 1] = next[j + 1].clone() + c.clone();
                    if j > 0 {
                        next[j - 1] = next[j - 1].clone() + c.clone() * S::from_i64(j as i64) / two_l.clone();
                    }
                }
                inv.push(next);
            }
            let mut nm = vec![S::one()];
            for m in 1..=degree {
                let prev = nm[m - 1].clone();
                nm.push(prev * S::from_i64(m as i64) / two_l.clone());
            }
            hermite.push(ps);
            inverse.push(inv);
            norms.push(nm);
        }
        HermiteBasis {
            n,
            rank,
            degree,
            lambda: lambda.to_vec(),
            mu: mu.to_vec(),
            index,
            position,
            hermite,
            inverse,
            norms,
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn lambda(&self) -> &[S] {
        &self.lambda
    }

    pub fn mu(&self) -> &[S] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self, i: usize) -> &HermiteIndex {
        &self.index[i]
    }

    pub fn indices(&self) -> &[HermiteIndex] {
        &self.index
    }

    pub fn position(&self, h: &HermiteIndex) -> Option<usize> {
        self.position.get(h).copied()
    }

    pub fn eigenvalue(&self, i: usize) -> S {
        harmonic_eigenvalue(&self.lambda, &self.mu, &self.index[i])
    }

    pub fn norm2(&self, i: usize) -> S {
        let h = &self.index[i];
        h.alpha
            .entries()
            .iter()
            .enumerate()
            .fold(S::one(), |acc, (nu, &a)| acc * self.norms[nu][a as usize].clone())
    }

    /// `p_α` as a polynomial in `y`.
    pub fn poly(&self, h: &HermiteIndex) -> Poly<S> {
        let mut acc = Poly::one(self.n);
        for (nu, &a) in h.alpha.entries().iter().enumerate() {
            let factor = Poly::from_terms(
                self.n,
                self.hermite[nu][a as usize]
                    .iter()
                    .enumerate()
                    .map(|(e, c)| (MultiIndex::unit(self.n, nu).with(nu, e as u32), c.clone())),
            );
            acc = &acc * &factor;
        }
        acc
    }

    pub fn fiber(&self, h: &HermiteIndex) -> FiberPoly<S> {
        FiberPoly::unit(self.poly(h), self.rank, h.k)
    }

    /// Coordinates of `y^α e_k`.
    pub fn expand_monomial(&self, alpha: &MultiIndex, k: usize) -> Result<HermiteCoords<S>> {
        if alpha.degree() > self.degree {
            return Err(QmfError::Truncation {
                required: alpha.degree(),
                available: self.degree,
            });
        }
        let mut partial: Vec<(Vec<u32>, S)> = vec![(Vec::new(), S::one())];
        for (nu, &a) in alpha.entries().iter().enumerate() {
            let row = &self.inverse[nu][a as usize];
            let mut next = Vec::with_capacity(partial.len() * row.len());
            for (prefix, c) in &partial {
                for (j, v) in row.iter().enumerate() {
                    if v.is_zero() {
                        continue;
                    }
                    let mut p = prefix.clone();
                    p.push(j as u32);
                    next.push((p, c.clone() * v.clone()));
                }
            }
            partial = next;
        }
        let mut out = HermiteCoords::new();
        for (a, c) in partial {
            let h = HermiteIndex {
                alpha: MultiIndex::new(a),
                k,
            };
            coords_add(&mut out, self.position[&h], c);
        }
        Ok(out)
    }

    /// Exact finite expansion of a fiber polynomial of degree at most the basis degree.
    pub fn expand(&self, q: &FiberPoly<S>) -> Result<HermiteCoords<S>> {
        let mut out = HermiteCoords::new();
        for (k, comp) in q.components().iter().enumerate() {
            for (alpha, c) in comp.terms() {
                let e = self.expand_monomial(alpha, k)?;
                coords_axpy(&mut out, c, &e);
            }
        }
        Ok(out)
    }

    pub fn synthesize(&self, coords: &HermiteCoords<S>) -> FiberPoly<S> {
        let mut comps = vec![Poly::zero(self.n); self.rank];
        for (i, c) in coords {
            let h = &self.index[*i];
            comps[h.k] = &comps[h.k] + &self.poly(h).scale(c);
        }
        FiberPoly::from_components(self.n, comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    #[test]
    fn one_dimensional_spectrum() {
        let t = build_spectrum(&[q(1, 1)], &[q(0, 1)], 2);
        let vals: Vec<_> = t.entries.iter().map(|(_, e)| e.clone()).collect();
        assert_eq!(vals, vec![q(1, 1), q(3, 1), q(5, 1)]);
    }

    #[test]
    fn shifted_ground_state() {
        let t = build_spectrum(&[q(1, 1), q(2, 1)], &[q(-3, 1)], 1);
        assert_eq!(t.entries[0].1, q(0, 1));
    }

    #[test]
    fn isotropic_first_excited() {
        let t = build_spectrum(&[q(1, 1), q(1, 1)], &[q(0, 1)], 3);
        let lvl = degenerate_level(&t, &q(4, 1), 0.0).unwrap();
        assert_eq!(lvl.m0, 2);
        assert_eq!(lvl.k, HalfInt::HALF);
        assert_eq!(lvl.parity, LevelParity::Odd);
    }

    #[test]
    fn mixed_bundle_level() {
        let t = build_spectrum(&[q(1, 1)], &[q(0, 1), q(2, 1)], 3);
        let lvl = degenerate_level(&t, &q(3, 1), 0.0).unwrap();
        assert_eq!(lvl.members, vec![HermiteIndex::new(vec![0], 1), HermiteIndex::new(vec![1], 0)]);
        assert_eq!(lvl.parity, LevelParity::Mixed);
    }

    #[test]
    fn missing_level() {
        let t = build_spectrum(&[q(1, 1)], &[q(0, 1)], 3);
        assert!(matches!(degenerate_level(&t, &q(2, 1), 0.0), Err(QmfError::NotInSpectrum(_))));
    }

    #[test]
    fn expansion_of_y_squared() {
        let b = HermiteBasis::new(&[q(1, 1)], &[q(0, 1)], 4);
        let y2 = FiberPoly::unit(Poly::monomial(MultiIndex::new(vec![2]), q(1, 1)), 1, 0);
        let c = b.expand(&y2).unwrap();
        // y² = p₂ + 1/2
        assert_eq!(c.get(&0), Some(&q(1, 2)));
        assert_eq!(c.get(&2), Some(&q(1, 1)));
        assert_eq!(b.synthesize(&c), y2);
    }
}
