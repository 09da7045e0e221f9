//! The weighted pairing on the rescaled space as a finite sum of Gaussian moments.
//!
//! Every integral is divided by the common factor `∏√(π/λ_ν)`, so the
//! rational part is all that is stored.

use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use crate::error::{QmfError, Result};
use crate::operator::{volume_density, ScalarJet};
use crate::scalar::Scalar;
use crate::series::{FormalScalarSeries, HalfInt, MatPoly, MultiIndex, Poly, S0Series};

/// `exp(−2Σ_{k≥1} ħ^{k/2} φ_{k+2}(y)) · √g(ħ^{1/2}y) = Σ_m ħ^m ω_m(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightExpansion<S> {
    pub omega: BTreeMap<HalfInt, Poly<S>>,
    pub max_order: HalfInt,
}

impl<S: Scalar> WeightExpansion<S> {
    pub fn get(&self, m: HalfInt) -> Poly<S> {
        let n = self.omega.values().next().map(|p| p.nvars()).unwrap_or(0);
        self.omega.get(&m).cloned().unwrap_or_else(|| Poly::zero(n))
    }
}

/// Series in ħ^{1/2} with polynomial coefficients, indexed by doubled exponent.
type PolySeries<S> = BTreeMap<i64, Poly<S>>;

fn ps_mul<S: Scalar>(a: &PolySeries<S>, b: &PolySeries<S>, max2: i64) -> PolySeries<S> {
    let mut out: PolySeries<S> = BTreeMap::new();
    for (ea, pa) in a {
        for (eb, pb) in b {
            if ea + eb > max2 {
                continue;
            }
            let prod = pa * pb;
            let e = ea + eb;
            let sum = match out.get(&e) {
                Some(old) => old + &prod,
                None => prod,
            };
            out.insert(e, sum);
        }
    }
    out.retain(|_, p| !p.is_zero());
    out
}

/// Weight polynomials `ω_m` for `m ≤ max_order`.
pub fn weight_expansion<S: Scalar>(
    phi: &ScalarJet<S>,
    metric_inverse: &[Poly<S>],
    max_order: HalfInt,
) -> Result<WeightExpansion<S>> {
    let n = phi.nvars();
    let max2 = max_order.doubled.max(0);
    let deg = max2 as usize;
    let mut f: PolySeries<S> = BTreeMap::new();
    for k in 1..=max2 {
        let part = phi.homogeneous(k as usize + 2).scale(&S::from_i64(-2));
        if !part.is_zero() {
            f.insert(k, part);
        }
    }
    let mut exp: PolySeries<S> = BTreeMap::from([(0, Poly::one(n))]);
    let mut power: PolySeries<S> = BTreeMap::from([(0, Poly::one(n))]);
    let mut fact = S::one();
    for j in 1..=max2 {
        power = ps_mul(&power, &f, max2);
        if power.is_empty() {
            break;
        }
        fact = fact * S::from_i64(j);
        for (e, p) in &power {
            let term = p.scale(&fact.inv());
            let sum = match exp.get(e) {
                Some(old) => old + &term,
                None => term,
            };
            exp.insert(*e, sum);
        }
    }
    let (sqrt_g, _) = volume_density(metric_inverse, n, deg)?;
    let mut g: PolySeries<S> = BTreeMap::new();
    for d in 0..=deg {
        let part = sqrt_g.homogeneous(d);
        if !part.is_zero() {
            g.insert(d as i64, part);
        }
    }
    let omega = ps_mul(&exp, &g, max2)
        .into_iter()
        .map(|(e, p)| (HalfInt::from_doubled(e), p))
        .collect();
    Ok(WeightExpansion { omega, max_order })
}

/// Rescaled fiber metric `γ(ħ^{1/2}y) = Σ_r ħ^r γ_r(y)`, `γ_r` homogeneous of degree `2r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaJet<S> {
    pub gamma: BTreeMap<HalfInt, MatPoly<S>>,
}

impl<S: Scalar> GammaJet<S> {
    pub fn identity(n: usize, rank: usize) -> Self {
        GammaJet {
            gamma: BTreeMap::from([(HalfInt::ZERO, MatPoly::identity(n, rank))]),
        }
    }

    pub fn from_jets(g: &MatPoly<S>) -> Self {
        let mut gamma = BTreeMap::new();
        for d in 0..=g.degree().unwrap_or(0) {
            let part = g.map_entries(|p| p.homogeneous(d));
            if !part.is_zero() {
                gamma.insert(HalfInt::from_doubled(d as i64), part);
            }
        }
        GammaJet { gamma }
    }
}

/// `∫ y^α e^{−⟨y,Λy⟩} dy / ∏√(π/λ_ν) = ∏ (α_ν−1)!!/(2λ_ν)^{α_ν/2}`, zero if any `α_ν` is odd.
pub fn gaussian_moment<S: Scalar>(alpha: &MultiIndex, lambda: &[S]) -> S {
    let mut acc = S::one();
    for (&a, l) in alpha.entries().iter().zip(lambda) {
        if a % 2 == 1 {
            return S::zero();
        }
        let two_l = S::from_i64(2) * l.clone();
        let mut k = 1;
        while k < a {
            acc = acc * S::from_i64(k as i64) / two_l.clone();
            k += 2;
        }
    }
    acc
}

/// Pairing context: weight, fiber metric and a memo of weighted moments.
#[derive(Debug)]
pub struct Pairing<S> {
    n: usize,
    rank: usize,
    lambda: Vec<S>,
    /// `Ω_s = Σ_{r+m=s} γ_r ω_m`, keyed by order `s`.
    weight: BTreeMap<HalfInt, MatPoly<S>>,
    max_order: HalfInt,
    moments: RwLock<HashMap<(i64, usize, usize, MultiIndex), S>>,
}

impl<S: Scalar> Pairing<S> {
    pub fn new(lambda: &[S], rank: usize, omega: &WeightExpansion<S>, gamma: &GammaJet<S>) -> Self {
        let n = lambda.len();
        let max_order = omega.max_order;
        let mut weight: BTreeMap<HalfInt, MatPoly<S>> = BTreeMap::new();
        for (r, g) in &gamma.gamma {
            for (m, w) in &omega.omega {
                let s = *r + *m;
                if s > max_order {
                    continue;
                }
                let term = g.mul_poly(w, usize::MAX);
                let sum = match weight.get(&s) {
                    Some(old) => old + &term,
                    None => term,
                };
                weight.insert(s, sum);
            }
        }
        weight.retain(|_, m| !m.is_zero());
        Pairing {
            n,
            rank,
            lambda: lambda.to_vec(),
            weight,
            max_order,
            moments: RwLock::new(HashMap::new()),
        }
    }

    /// Flat weight `ω = 1` and identity fiber metric.
    pub fn gaussian(lambda: &[S], rank: usize, max_order: HalfInt) -> Self {
        let n = lambda.len();
        let omega = WeightExpansion {
            omega: BTreeMap::from([(HalfInt::ZERO, Poly::one(n))]),
            max_order,
        };
        Self::new(lambda, rank, &omega, &GammaJet::identity(n, rank))
    }

    pub fn max_order(&self) -> HalfInt {
        self.max_order
    }

    pub fn lambda(&self) -> &[S] {
        &self.lambda
    }

    fn weighted_moment(&self, s: HalfInt, a: usize, b: usize, alpha: &MultiIndex) -> S {
        let key = (s.doubled, a, b, alpha.clone());
        if let Some(v) = self.moments.read().expect("moment cache poisoned").get(&key) {
            return v.clone();
        }
        let mut acc = S::zero();
        if let Some(w) = self.weight.get(&s) {
            for (delta, c) in w.entry(a, b).terms() {
                acc = acc + c.clone() * gaussian_moment(&alpha.add(delta), &self.lambda);
            }
        }
        self.moments
            .write()
            .expect("moment cache poisoned")
            .insert(key, acc.clone());
        acc
    }

    /// `(u, v)` as a Laurent series; the coefficient of ħ^e collects
    /// `∫ γ_r[u_j, v_l] ω_m e^{−⟨y,Λy⟩} dy` over all contributions with total exponent `e`.
    pub fn pair(&self, u: &S0Series<S>, v: &S0Series<S>) -> Result<FormalScalarSeries<S>> {
        if u.nvars() != self.n || v.nvars() != self.n || u.rank() != self.rank || v.rank() != self.rank {
            return Err(QmfError::Dimension("pairing arguments do not match the problem shape".into()));
        }
        let val = |s: &S0Series<S>| {
            s.coeffs()
                .keys()
                .next()
                .map(|j| s.exponent(*j))
                .unwrap_or(s.abs_prec() + HalfInt::HALF)
        };
        let (vu, vv) = (val(u), val(v));
        let prec = (u.abs_prec() + vv)
            .min(v.abs_prec() + vu)
            .min(vu + vv + self.max_order);
        let mut terms: BTreeMap<HalfInt, S> = BTreeMap::new();
        for (ju, pu) in u.coeffs() {
            for (jv, pv) in v.coeffs() {
                let base = u.exponent(*ju) + v.exponent(*jv);
                for s in self.weight.keys() {
                    let e = base + *s;
                    if e > prec {
                        break;
                    }
                    let mut acc = S::zero();
                    for a in 0..self.rank {
                        let ca = pu.component(a);
                        if ca.is_zero() {
                            continue;
                        }
                        for b in 0..self.rank {
                            let cb = pv.component(b);
                            if cb.is_zero() {
                                continue;
                            }
                            for (alpha, x) in ca.terms() {
                                for (beta, y) in cb.terms() {
                                    let m = self.weighted_moment(*s, a, b, &alpha.add(beta));
                                    if !m.is_zero() {
                                        acc = acc + x.conj() * y.clone() * m;
                                    }
                                }
                            }
                        }
                    }
                    if !acc.is_zero() {
                        let old = terms.remove(&e).unwrap_or_else(S::zero);
                        terms.insert(e, old + acc);
                    }
                }
            }
        }
        Ok(FormalScalarSeries::from_terms(terms, prec))
    }
}

/// Free-function form of [`Pairing::pair`].
pub fn pair_s0<S: Scalar>(u: &S0Series<S>, v: &S0Series<S>, pairing: &Pairing<S>) -> Result<FormalScalarSeries<S>> {
    pairing.pair(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    #[test]
    fn moment_examples() {
        assert_eq!(gaussian_moment(&MultiIndex::new(vec![0]), &[q(1, 1)]), q(1, 1));
        assert_eq!(gaussian_moment(&MultiIndex::new(vec![2]), &[q(1, 1)]), q(1, 2));
        assert_eq!(gaussian_moment(&MultiIndex::new(vec![4, 2]), &[q(1, 1), q(2, 1)]), q(3, 16));
        assert_eq!(gaussian_moment(&MultiIndex::new(vec![3]), &[q(1, 1)]), q(0, 1));
    }

    #[test]
    fn cubic_weight_half_order() {
        let phi = Poly::from_terms(
            1,
            [
                (MultiIndex::new(vec![2]), q(1, 2)),
                (MultiIndex::new(vec![3]), q(1, 6)),
            ],
        );
        let w = weight_expansion(&phi, &[Poly::one(1)], HalfInt::ONE).unwrap();
        assert_eq!(w.get(HalfInt::ZERO), Poly::one(1));
        assert_eq!(w.get(HalfInt::HALF), Poly::monomial(MultiIndex::new(vec![3]), q(-1, 3)));
    }
}
