//! Eigenprojection of the graded family onto the `E₀` level, computed from
//! residues of the formal resolvent in the Hermite basis.
//!
//! With `w = z − E₀`, the unperturbed resolvent `R₀(z) = (Q₀ − z)^{-1}` acts on a
//! level member as `−1/w` and elsewhere as `1/(Δ − w) = Σ_m w^m/Δ^{m+1}`, where
//! `Δ = E_β − E₀`. The ħ^j part of `R(z)h` obeys
//! `X_0 = R₀h`, `X_j = −R₀ Σ_{i≥1/2} Q_i X_{j−i}`, and `Π_j h = −Res_{w=0} X_j`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::error::{QmfError, Result};
use crate::hermite::{coords_add, coords_axpy, DegenerateLevel, HermiteBasis, HermiteCoords, HermiteIndex, DEFAULT_CLUSTER_TOL};
use crate::operator::RescaledFamily;
use crate::pairing::Pairing;
use crate::scalar::Scalar;
use crate::series::{FiberPoly, FormalScalarSeries, HalfInt, S0Series};

/// Series `Σ_e ħ^e u_e` with Hermite-coordinate coefficients, `e ≥ 0`.
pub type CoordSeries<S> = BTreeMap<HalfInt, HermiteCoords<S>>;

/// Laurent polynomial in `w = z − E₀` with Hermite-coordinate coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleLaurent<S> {
    pub terms: BTreeMap<i64, HermiteCoords<S>>,
    /// Highest power of `w` kept.
    pub cap: i64,
}

impl<S: Scalar> PoleLaurent<S> {
    pub fn constant(x: HermiteCoords<S>, cap: i64) -> Self {
        let mut terms = BTreeMap::new();
        if !x.is_empty() {
            terms.insert(0, x);
        }
        PoleLaurent { terms, cap }
    }

    pub fn zero(cap: i64) -> Self {
        PoleLaurent {
            terms: BTreeMap::new(),
            cap,
        }
    }

    pub fn residue(&self) -> HermiteCoords<S> {
        self.terms.get(&-1).cloned().unwrap_or_default()
    }

    pub fn lowest_power(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }

    fn add_scaled(&mut self, other: &PoleLaurent<S>, s: &S) {
        for (p, x) in &other.terms {
            let e = self.terms.entry(*p).or_default();
            coords_axpy(e, s, x);
        }
        self.terms.retain(|_, x| !x.is_empty());
    }
}

/// Matrices of `Q_i` in the Hermite basis, column by column.
#[derive(Debug)]
pub struct QMatrices<S> {
    basis: Arc<HermiteBasis<S>>,
    columns: BTreeMap<HalfInt, Vec<Option<HermiteCoords<S>>>>,
    max_order: HalfInt,
    e0: S,
    tol: f64,
}

impl<S: Scalar> QMatrices<S> {
    /// Tabulates `Q_i p_β e_l` for every order `i` of the family and every basis
    /// element whose image stays within the basis degree.
    pub fn new(basis: Arc<HermiteBasis<S>>, family: &RescaledFamily<S>, e0: S) -> Result<Self> {
        let dh = basis.degree();
        let mut columns = BTreeMap::new();
        for (i, q) in &family.pieces {
            if q.is_zero() && *i > HalfInt::ZERO {
                continue;
            }
            let raise = i.doubled as usize;
            let cols: Result<Vec<Option<HermiteCoords<S>>>> = (0..basis.len())
                .into_par_iter()
                .map(|b| {
                    let h = basis.index(b);
                    if h.degree() + raise > dh {
                        return Ok(None);
                    }
                    let image = q.apply_trunc(&basis.fiber(h), usize::MAX)?;
                    basis.expand(&image).map(Some)
                })
                .collect();
            columns.insert(*i, cols?);
        }
        Ok(QMatrices {
            basis,
            columns,
            max_order: family.max_order,
            e0,
            tol: DEFAULT_CLUSTER_TOL,
        })
    }

    pub fn basis(&self) -> &Arc<HermiteBasis<S>> {
        &self.basis
    }

    pub fn e0(&self) -> &S {
        &self.e0
    }

    /// Orders `i ≥ 1/2` carrying a nonzero piece.
    pub fn perturbation_orders(&self) -> Vec<HalfInt> {
        self.columns.keys().copied().filter(|i| *i > HalfInt::ZERO).collect()
    }

    /// Highest order of the family the matrices were built from.
    pub fn max_order(&self) -> HalfInt {
        self.max_order
    }

    /// `Q_i x`; errors when the image would leave the basis.
    pub fn apply(&self, i: HalfInt, x: &HermiteCoords<S>) -> Result<HermiteCoords<S>> {
        let mut out = HermiteCoords::new();
        let Some(cols) = self.columns.get(&i) else {
            return Ok(out);
        };
        for (b, c) in x {
            match &cols[*b] {
                Some(col) => coords_axpy(&mut out, c, col),
                None => {
                    return Err(QmfError::Truncation {
                        required: self.basis.index(*b).degree() + i.doubled as usize,
                        available: self.basis.degree(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// `Q x` for a coordinate series, through exponent `prec`.
    pub fn apply_series(&self, u: &CoordSeries<S>, prec: HalfInt) -> Result<CoordSeries<S>> {
        let mut out: CoordSeries<S> = BTreeMap::new();
        for (e, x) in u {
            for i in self.columns.keys() {
                if *e + *i > prec {
                    break;
                }
                let y = self.apply(*i, x)?;
                let acc = out.entry(*e + *i).or_default();
                coords_axpy(acc, &S::one(), &y);
            }
        }
        out.retain(|_, x| !x.is_empty());
        Ok(out)
    }

    pub fn is_level_member(&self, b: usize) -> bool {
        let e = self.basis.eigenvalue(b);
        if S::EXACT {
            e.approx_eq(&self.e0)
        } else {
            (e.to_f64() - self.e0.to_f64()).abs() <= self.tol * self.e0.abs_f64().max(1.0)
        }
    }

    /// `R₀(z)` on a Laurent polynomial in `w = z − E₀`.
    pub fn resolvent(&self, x: &PoleLaurent<S>) -> PoleLaurent<S> {
        let mut by_index: BTreeMap<usize, BTreeMap<i64, S>> = BTreeMap::new();
        for (p, coords) in &x.terms {
            for (b, c) in coords {
                by_index.entry(*b).or_default().insert(*p, c.clone());
            }
        }
        let mut out = PoleLaurent::zero(x.cap);
        for (b, seq) in by_index {
            if self.is_level_member(b) {
                for (p, c) in seq {
                    coords_add(out.terms.entry(p - 1).or_default(), b, -c);
                }
            } else {
                let delta = self.basis.eigenvalue(b) - self.e0.clone();
                let inv = delta.inv();
                let lo = *seq.keys().next().expect("non-empty sequence");
                let mut prev = S::zero();
                for q in lo..=x.cap {
                    let c = seq.get(&q).cloned().unwrap_or_else(S::zero);
                    let v = (c + prev) * inv.clone();
                    coords_add(out.terms.entry(q).or_default(), b, v.clone());
                    prev = v;
                }
            }
        }
        out.terms.retain(|_, c| !c.is_empty());
        out
    }

    fn apply_laurent(&self, i: HalfInt, x: &PoleLaurent<S>) -> Result<PoleLaurent<S>> {
        let mut out = PoleLaurent::zero(x.cap);
        for (p, c) in &x.terms {
            let y = self.apply(i, c)?;
            if !y.is_empty() {
                out.terms.insert(*p, y);
            }
        }
        Ok(out)
    }
}

/// `Π_j x` for `j = 0, 1/2, …, order` by the residue recursion.
pub fn projector_terms<S: Scalar>(qm: &QMatrices<S>, x: &HermiteCoords<S>, order: HalfInt) -> Result<Vec<HermiteCoords<S>>> {
    let cap = order.doubled + 1;
    let orders = qm.perturbation_orders();
    let mut chain: Vec<PoleLaurent<S>> = vec![qm.resolvent(&PoleLaurent::constant(x.clone(), cap))];
    let mut out = vec![negate(&chain[0].residue())];
    for jd in 1..=order.doubled {
        let j = HalfInt::from_doubled(jd);
        let mut acc = PoleLaurent::zero(cap);
        for i in &orders {
            if *i > j {
                break;
            }
            let prev = &chain[(j - *i).doubled as usize];
            if prev.terms.is_empty() {
                continue;
            }
            acc.add_scaled(&qm.apply_laurent(*i, prev)?, &S::one());
        }
        let xj = qm.resolvent(&acc);
        let xj = PoleLaurent {
            terms: xj.terms.into_iter().map(|(p, c)| (p, negate(&c))).collect(),
            cap,
        };
        out.push(negate(&xj.residue()));
        chain.push(xj);
    }
    Ok(out)
}

fn negate<S: Scalar>(x: &HermiteCoords<S>) -> HermiteCoords<S> {
    x.iter().map(|(k, v)| (*k, -v.clone())).collect()
}

/// Compositions of `j` into parts drawn from `orders`, in lexicographic order.
pub fn compositions(j: HalfInt, orders: &[HalfInt]) -> Vec<Vec<HalfInt>> {
    if j == HalfInt::ZERO {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for &first in orders {
        if first > j {
            break;
        }
        for mut rest in compositions(j - first, orders) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `Π_j h` from the explicit sum over chains
/// `(−1)^k R₀ Q_{j_1} R₀ ⋯ Q_{j_k} R₀ h`, applied right to left.
pub fn resolvent_chain_apply<S: Scalar>(qm: &QMatrices<S>, j: HalfInt, h: &HermiteIndex) -> Result<HermiteCoords<S>> {
    let basis = qm.basis();
    let b = basis
        .position(h)
        .ok_or_else(|| QmfError::Truncation {
            required: h.degree(),
            available: basis.degree(),
        })?;
    let cap = j.doubled + 1;
    let start = PoleLaurent::constant(HermiteCoords::from([(b, S::one())]), cap);
    let mut total = PoleLaurent::zero(cap);
    for comp in compositions(j, &qm.perturbation_orders()) {
        let mut x = qm.resolvent(&start);
        for i in comp.iter().rev() {
            x = qm.resolvent(&qm.apply_laurent(*i, &x)?);
        }
        let sign = if comp.len() % 2 == 0 { S::one() } else { -S::one() };
        total.add_scaled(&x, &sign);
    }
    Ok(negate(&total.residue()))
}

/// Eigenprojection onto the `E₀` level through order `N`.
#[derive(Debug)]
pub struct Projector<S> {
    qm: Arc<QMatrices<S>>,
    level: DegenerateLevel<S>,
    order: HalfInt,
    member_positions: Vec<usize>,
    cache: RwLock<HashMap<usize, Arc<Vec<HermiteCoords<S>>>>>,
}

impl<S: Scalar> Projector<S> {
    pub fn order(&self) -> HalfInt {
        self.order
    }

    pub fn level(&self) -> &DegenerateLevel<S> {
        &self.level
    }

    pub fn qmatrices(&self) -> &Arc<QMatrices<S>> {
        &self.qm
    }

    pub fn basis(&self) -> &Arc<HermiteBasis<S>> {
        self.qm.basis()
    }

    pub fn member_positions(&self) -> &[usize] {
        &self.member_positions
    }

    /// Highest order available for a basis element of the given degree.
    fn reach(&self, degree: usize) -> HalfInt {
        let room = self.basis().degree() as i64 - degree as i64;
        self.order.min(HalfInt::from_doubled(room))
    }

    /// `[Π_0 p_b, Π_{1/2} p_b, …]` up to the reachable order, memoized.
    pub fn image_terms(&self, b: usize) -> Result<Arc<Vec<HermiteCoords<S>>>> {
        if let Some(v) = self.cache.read().expect("projector cache poisoned").get(&b) {
            return Ok(v.clone());
        }
        let deg = self.basis().index(b).degree();
        let reach = self.reach(deg);
        if reach < HalfInt::ZERO {
            return Err(QmfError::Truncation {
                required: deg,
                available: self.basis().degree(),
            });
        }
        let terms = Arc::new(projector_terms(&self.qm, &HermiteCoords::from([(b, S::one())]), reach)?);
        self.cache
            .write()
            .expect("projector cache poisoned")
            .insert(b, terms.clone());
        Ok(terms)
    }

    /// `Π h` as a coordinate series through the projector order.
    pub fn image(&self, h: &HermiteIndex) -> Result<CoordSeries<S>> {
        let b = self.basis().position(h).ok_or_else(|| QmfError::Truncation {
            required: h.degree(),
            available: self.basis().degree(),
        })?;
        let mut out = CoordSeries::new();
        for (jd, x) in self.image_terms(b)?.iter().enumerate() {
            if !x.is_empty() {
                out.insert(HalfInt::from_doubled(jd as i64), x.clone());
            }
        }
        Ok(out)
    }

    /// `Π h` in the rescaled space, with offset `K = |α|/2`.
    pub fn image_s0(&self, h: &HermiteIndex) -> Result<S0Series<S>> {
        coords_to_s0(self.basis(), &self.image(h)?, self.order)
    }

    /// `Π u` through exponent `prec`.
    pub fn apply_series(&self, u: &CoordSeries<S>, prec: HalfInt) -> Result<CoordSeries<S>> {
        let mut out = CoordSeries::new();
        for (e, x) in u {
            if *e > prec {
                continue;
            }
            let need = prec - *e;
            for (b, c) in x {
                let terms = self.image_terms(*b)?;
                if HalfInt::from_doubled(terms.len() as i64 - 1) < need {
                    return Err(QmfError::Truncation {
                        required: self.basis().index(*b).degree() + need.doubled as usize,
                        available: self.basis().degree(),
                    });
                }
                for jd in 0..=need.doubled {
                    let t = &terms[jd as usize];
                    if !t.is_empty() {
                        coords_axpy(out.entry(*e + HalfInt::from_doubled(jd)).or_default(), c, t);
                    }
                }
            }
        }
        out.retain(|_, x| !x.is_empty());
        Ok(out)
    }
}

/// Builds the projector and its images of the level members (in parallel).
pub fn build_projector<S: Scalar>(qm: Arc<QMatrices<S>>, level: &DegenerateLevel<S>, order: HalfInt) -> Result<Projector<S>> {
    let basis = qm.basis().clone();
    let member_positions: Vec<usize> = level
        .members
        .iter()
        .map(|h| {
            basis.position(h).ok_or(QmfError::Truncation {
                required: h.degree(),
                available: basis.degree(),
            })
        })
        .collect::<Result<_>>()?;
    let need = level.k.doubled as usize + order.doubled.max(0) as usize;
    if need > basis.degree() {
        return Err(QmfError::Truncation {
            required: need,
            available: basis.degree(),
        });
    }
    if order > qm.max_order() {
        return Err(QmfError::Truncation {
            required: order.doubled as usize,
            available: qm.max_order().doubled as usize,
        });
    }
    let proj = Projector {
        qm,
        level: level.clone(),
        order,
        member_positions: member_positions.clone(),
        cache: RwLock::new(HashMap::new()),
    };
    member_positions
        .par_iter()
        .map(|&b| proj.image_terms(b).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;
    Ok(proj)
}

/// Turns a coordinate series into an element of the rescaled space with the
/// smallest offset compatible with the degree invariant.
pub fn coords_to_s0<S: Scalar>(basis: &HermiteBasis<S>, u: &CoordSeries<S>, prec: HalfInt) -> Result<S0Series<S>> {
    let polys: Vec<(HalfInt, FiberPoly<S>)> = u.iter().map(|(e, x)| (*e, basis.synthesize(x))).collect();
    let mut k = HalfInt::ZERO;
    for (e, p) in &polys {
        if let Some(d) = p.degree() {
            k = k.max(HalfInt::from_doubled(d as i64) - *e);
        }
    }
    S0Series::from_terms(
        basis.nvars(),
        basis.rank(),
        k,
        prec + k,
        polys.into_iter().map(|(e, p)| (e + k, p)),
    )
}

/// Largest coefficient magnitude in a coordinate series through `prec`.
pub fn series_max_abs<S: Scalar>(u: &CoordSeries<S>, prec: HalfInt) -> f64 {
    u.range(..=prec)
        .flat_map(|(_, x)| x.values())
        .map(|v| v.abs_f64())
        .fold(0.0, f64::max)
}

pub fn series_sub<S: Scalar>(a: &CoordSeries<S>, b: &CoordSeries<S>) -> CoordSeries<S> {
    let mut out = a.clone();
    for (e, x) in b {
        coords_axpy(out.entry(*e).or_default(), &-S::one(), x);
    }
    out.retain(|_, x| !x.is_empty());
    out
}

/// Coefficientwise defects of the projector identities through the projector order.
#[derive(Debug, Clone)]
pub struct ProjectorReport {
    pub order: HalfInt,
    pub idempotency: f64,
    pub commutation: f64,
    pub symmetry: f64,
    /// Leading I-coordinate matrix of the member images is the identity.
    pub leading_identity: bool,
    /// Largest residual of expressing test images through the member images.
    pub span_defect: f64,
    pub rank: usize,
    pub tested: usize,
}

impl ProjectorReport {
    pub fn max_defect(&self) -> f64 {
        self.idempotency.max(self.commutation).max(self.symmetry).max(self.span_defect)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.leading_identity && self.max_defect() <= tol
    }
}

fn max_series_abs<S: Scalar>(s: &FormalScalarSeries<S>) -> f64 {
    s.max_abs()
}

/// Checks `Π² = Π`, `[Q, Π] = 0`, pairing symmetry and rank `m₀` on the level
/// members and on every basis element of degree at most `test_degree`.
pub fn projector_diagnostics<S: Scalar>(proj: &Projector<S>, pairing: &Pairing<S>, test_degree: usize) -> Result<ProjectorReport> {
    let basis = proj.basis().clone();
    let order = proj.order();
    let qm = proj.qmatrices();
    let mut tests: Vec<usize> = proj.member_positions().to_vec();
    for b in 0..basis.len() {
        let h = basis.index(b);
        if h.degree() <= test_degree && !tests.contains(&b) && proj.reach(h.degree()) >= order {
            tests.push(b);
        }
    }
    let unit = |b: usize| CoordSeries::from([(HalfInt::ZERO, HermiteCoords::from([(b, S::one())]))]);

    let results: Vec<Result<(f64, f64, CoordSeries<S>)>> = tests
        .par_iter()
        .map(|&b| {
            let u = unit(b);
            let pu = proj.apply_series(&u, order)?;
            let ppu = proj.apply_series(&pu, order)?;
            let idem = series_max_abs(&series_sub(&ppu, &pu), order);
            let qpu = qm.apply_series(&pu, order)?;
            let pqu = proj.apply_series(&qm.apply_series(&u, order)?, order)?;
            let comm = series_max_abs(&series_sub(&qpu, &pqu), order);
            Ok((idem, comm, pu))
        })
        .collect();
    let mut idempotency: f64 = 0.0;
    let mut commutation: f64 = 0.0;
    let mut images = Vec::with_capacity(tests.len());
    for r in results {
        let (i, c, pu) = r?;
        idempotency = idempotency.max(i);
        commutation = commutation.max(c);
        images.push(pu);
    }

    // symmetry on a bounded set of pairs
    let mut symmetry: f64 = 0.0;
    let sym_set: Vec<usize> = (0..tests.len()).take(6).collect();
    for &x in &sym_set {
        for &y in &sym_set {
            if y < x {
                continue;
            }
            let u = coords_to_s0(&basis, &unit(tests[x]), order)?;
            let v = coords_to_s0(&basis, &unit(tests[y]), order)?;
            let pu = coords_to_s0(&basis, &images[x], order)?;
            let pv = coords_to_s0(&basis, &images[y], order)?;
            let lhs = pairing.pair(&pu, &v)?;
            let rhs = pairing.pair(&u, &pv)?;
            let prec = lhs.prec().min(rhs.prec());
            symmetry = symmetry.max(max_series_abs(&(&lhs.truncate(prec) - &rhs.truncate(prec))));
        }
    }

    // rank: the I-coordinates of the member images start with the identity, and
    // every tested image is a series combination of the member images
    let members = proj.member_positions();
    let m0 = members.len();
    let icoord = |s: &CoordSeries<S>, k: usize| -> BTreeMap<HalfInt, S> {
        s.iter()
            .filter_map(|(e, x)| x.get(&members[k]).map(|v| (*e, v.clone())))
            .collect()
    };
    let member_images = &images[..m0];
    let mut leading_identity = true;
    for (l, img) in member_images.iter().enumerate() {
        for k in 0..m0 {
            let lead = icoord(img, k).get(&HalfInt::ZERO).cloned().unwrap_or_else(S::zero);
            let expect = if k == l { S::one() } else { S::zero() };
            if !lead.approx_eq(&expect) {
                leading_identity = false;
            }
        }
    }
    let mut span_defect: f64 = 0.0;
    if leading_identity {
        // P = 1 + E, with P_{kl} the I-coordinate k of Π h_l
        let p_entries: Vec<Vec<BTreeMap<HalfInt, S>>> =
            (0..m0).map(|k| (0..m0).map(|l| icoord(&member_images[l], k)).collect()).collect();
        for img in &images[m0..] {
            // solve P x = c by x ← c − E x
            let c: Vec<BTreeMap<HalfInt, S>> = (0..m0).map(|k| icoord(img, k)).collect();
            let mut x = c.clone();
            for _ in 0..=order.doubled {
                let mut next = c.clone();
                for k in 0..m0 {
                    for l in 0..m0 {
                        for (e1, p) in &p_entries[k][l] {
                            if *e1 == HalfInt::ZERO {
                                continue;
                            }
                            for (e2, v) in &x[l] {
                                let e = *e1 + *e2;
                                if e <= order {
                                    let old = next[k].remove(&e).unwrap_or_else(S::zero);
                                    next[k].insert(e, old - p.clone() * v.clone());
                                }
                            }
                        }
                    }
                }
                x = next;
            }
            let mut combo = CoordSeries::new();
            for l in 0..m0 {
                for (e1, v) in &x[l] {
                    for (e2, y) in &member_images[l] {
                        if *e1 + *e2 <= order {
                            coords_axpy(combo.entry(*e1 + *e2).or_default(), v, y);
                        }
                    }
                }
            }
            span_defect = span_defect.max(series_max_abs(&series_sub(img, &combo), order));
        }
    }
    Ok(ProjectorReport {
        order,
        idempotency,
        commutation,
        symmetry,
        leading_identity,
        span_defect,
        rank: if leading_identity { m0 } else { 0 },
        tested: tests.len(),
    })
}
