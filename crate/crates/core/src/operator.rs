//! Jet data of the operator, the eikonal phase, the conjugated operator and
//! its rescaled graded family.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{QmfError, Result};
use crate::linalg::Mat;
use crate::scalar::{Rational, Scalar};
use crate::series::{FiberPoly, HalfInt, MatPoly, MultiIndex, Poly};

/// Taylor polynomial of a scalar function; homogeneous parts via [`Poly::homogeneous`].
pub type ScalarJet<S> = Poly<S>;

/// Second-order part of the operator, either through a connection or in raw coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum LaplaceData<S> {
    /// `L = -(1/√g)(∂_i + Γ_i)(√g g^{ij}(∂_j + Γ_j)) + K`.
    Connection { gamma: Vec<MatPoly<S>>, endo: MatPoly<S> },
    /// `L = -g^{ij}∂_i∂_j + b_j ∂_j + c`.
    Raw { drift: Vec<MatPoly<S>>, endo: MatPoly<S> },
}

/// Truncated Taylor data at the minimum, in normal coordinates and a
/// parallel frame of the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct JetProblem<S> {
    pub n: usize,
    pub rank: usize,
    /// Square roots of the Hessian eigenvalues of `V/2`.
    pub lambda: Vec<S>,
    pub potential: Poly<S>,
    /// Full `g^{ij}` (row-major, `n × n`), identity at the origin included.
    pub metric_inverse: Vec<Poly<S>>,
    pub endomorphism: MatPoly<S>,
    pub laplace: LaplaceData<S>,
    /// Fiber metric jets; the identity when absent.
    pub fiber_metric: Option<MatPoly<S>>,
}

impl<S: Scalar> JetProblem<S> {
    /// Flat, trivial-bundle problem with `W` constant.
    pub fn new(lambda: Vec<S>, potential: Poly<S>, endomorphism: MatPoly<S>) -> Self {
        let n = lambda.len();
        let rank = endomorphism.rank();
        JetProblem {
            n,
            rank,
            lambda,
            potential,
            metric_inverse: flat_metric(n),
            endomorphism,
            laplace: LaplaceData::Connection {
                gamma: vec![MatPoly::zero(n, rank); n],
                endo: MatPoly::zero(n, rank),
            },
            fiber_metric: None,
        }
    }

    /// `V = Σ λ_ν² x_ν²`, `W = diag(μ)`.
    pub fn harmonic(lambda: Vec<S>, mu: Vec<S>) -> Self {
        let n = lambda.len();
        let potential = harmonic_potential(&lambda);
        let w = MatPoly::from_constant(&Mat::diag(&mu), n);
        Self::new(lambda, potential, w)
    }

    pub fn metric(&self, i: usize, j: usize) -> &Poly<S> {
        &self.metric_inverse[i * self.n + j]
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> JetProblem<T> {
        JetProblem {
            n: self.n,
            rank: self.rank,
            lambda: self.lambda.iter().map(f).collect(),
            potential: self.potential.map(f),
            metric_inverse: self.metric_inverse.iter().map(|p| p.map(f)).collect(),
            endomorphism: self.endomorphism.map(f),
            laplace: match &self.laplace {
                LaplaceData::Connection { gamma, endo } => LaplaceData::Connection {
                    gamma: gamma.iter().map(|g| g.map(f)).collect(),
                    endo: endo.map(f),
                },
                LaplaceData::Raw { drift, endo } => LaplaceData::Raw {
                    drift: drift.iter().map(|g| g.map(f)).collect(),
                    endo: endo.map(f),
                },
            },
            fiber_metric: self.fiber_metric.as_ref().map(|g| g.map(f)),
        }
    }

    /// Highest degree among all stored jets.
    pub fn max_input_degree(&self) -> usize {
        let mut d = self.potential.degree().unwrap_or(0);
        for g in &self.metric_inverse {
            d = d.max(g.degree().unwrap_or(0));
        }
        d.max(self.endomorphism.degree().unwrap_or(0))
    }

    /// Enforces the setup invariants: positive λ, normalized quadratic part,
    /// normal coordinates for the metric, symmetric `W(p)`.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.lambda.len() != n {
            return Err(QmfError::Invalid(format!("expected {n} values of lambda, found {}", self.lambda.len())));
        }
        if n == 0 || self.rank == 0 {
            return Err(QmfError::Invalid("dimension and rank must be positive".into()));
        }
        for (i, l) in self.lambda.iter().enumerate() {
            if !(l.to_f64() > 0.0) || l.is_zero() {
                return Err(QmfError::Invalid(format!("degenerate minimum: lambda[{i}] must be positive")));
            }
        }
        if self.potential.nvars() != n {
            return Err(QmfError::Dimension("potential has the wrong number of variables".into()));
        }
        if !self.potential.homogeneous(0).is_zero() || !self.potential.homogeneous(1).is_zero() {
            return Err(QmfError::Invalid("potential must vanish to second order at the minimum".into()));
        }
        if !(&self.potential.homogeneous(2) - &harmonic_potential(&self.lambda)).is_zero() {
            return Err(QmfError::Invalid(
                "coordinates not normalized: quadratic part of V must equal Σ λ_ν² x_ν²".into(),
            ));
        }
        if self.metric_inverse.len() != n * n {
            return Err(QmfError::Dimension("metric must have n × n entries".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let g = self.metric(i, j);
                if !(g - self.metric(j, i)).is_zero() {
                    return Err(QmfError::Invalid("inverse metric must be symmetric".into()));
                }
                let expected = if i == j { S::one() } else { S::zero() };
                if !(g.coeff(&MultiIndex::zeros(n)) - expected).is_zero() {
                    return Err(QmfError::Invalid("inverse metric must be the identity at the origin".into()));
                }
                if !g.homogeneous(1).is_zero() {
                    return Err(QmfError::Invalid("inverse metric must have no linear terms (normal coordinates)".into()));
                }
            }
        }
        let check_mat = |m: &MatPoly<S>, what: &str| -> Result<()> {
            if m.rank() != self.rank || m.nvars() != n {
                return Err(QmfError::Dimension(format!("{what} has the wrong shape")));
            }
            Ok(())
        };
        check_mat(&self.endomorphism, "endomorphism")?;
        if !self.endomorphism.at_origin().is_symmetric() {
            return Err(QmfError::Invalid("W(p) must be hermitian".into()));
        }
        match &self.laplace {
            LaplaceData::Connection { gamma, endo } | LaplaceData::Raw { drift: gamma, endo } => {
                if gamma.len() != n {
                    return Err(QmfError::Dimension("one connection or drift term per direction expected".into()));
                }
                for g in gamma {
                    check_mat(g, "connection")?;
                }
                check_mat(endo, "laplace endomorphism")?;
            }
        }
        if let Some(gm) = &self.fiber_metric {
            check_mat(gm, "fiber metric")?;
            if !gm.is_symmetric() {
                return Err(QmfError::Invalid("fiber metric must be hermitian".into()));
            }
            let g0 = gm.at_origin().map(|v| v.to_f64());
            let sym = nalgebra::DMatrix::from_fn(self.rank, self.rank, |i, j| g0[(i, j)]);
            if sym.symmetric_eigenvalues().iter().any(|&v| v <= 0.0) {
                return Err(QmfError::Invalid("fiber metric must be positive definite at the origin".into()));
            }
        }
        Ok(())
    }

    /// Eigenvalues of `W(p)` when it is diagonal.
    pub fn fiber_spectrum(&self) -> Result<Vec<S>> {
        let w0 = self.endomorphism.at_origin();
        if !w0.is_diagonal() {
            return Err(QmfError::Invalid(
                "W(p) must be diagonal in exact mode (rotate the fiber frame first)".into(),
            ));
        }
        Ok(w0.diagonal())
    }

    /// Conjugates every fiber quantity by the constant orthogonal matrix `o`.
    pub fn rotate_fiber(&self, o: &Mat<S>) -> Self {
        let mut out = self.clone();
        out.endomorphism = self.endomorphism.conjugate(o);
        out.laplace = match &self.laplace {
            LaplaceData::Connection { gamma, endo } => LaplaceData::Connection {
                gamma: gamma.iter().map(|g| g.conjugate(o)).collect(),
                endo: endo.conjugate(o),
            },
            LaplaceData::Raw { drift, endo } => LaplaceData::Raw {
                drift: drift.iter().map(|g| g.conjugate(o)).collect(),
                endo: endo.conjugate(o),
            },
        };
        out.fiber_metric = self.fiber_metric.as_ref().map(|g| g.conjugate(o));
        out
    }
}

impl JetProblem<Rational> {
    pub fn to_float(&self) -> JetProblem<f64> {
        self.map(|q| q.to_f64())
    }
}

pub fn flat_metric<S: Scalar>(n: usize) -> Vec<Poly<S>> {
    (0..n * n)
        .map(|k| if k / n == k % n { Poly::one(n) } else { Poly::zero(n) })
        .collect()
}

pub fn harmonic_potential<S: Scalar>(lambda: &[S]) -> Poly<S> {
    let n = lambda.len();
    Poly::from_terms(
        n,
        lambda.iter().enumerate().map(|(i, l)| {
            (MultiIndex::unit(n, i).add(&MultiIndex::unit(n, i)), l.clone() * l.clone())
        }),
    )
}

/// Sum of terms `c(x) ∂^β` with `rank × rank` coefficient entries.
///
/// A term `P x^α ∂^β` has degree `|α| - |β|`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedDiffOp<S> {
    n: usize,
    rank: usize,
    entries: Vec<BTreeMap<MultiIndex, Poly<S>>>,
}

impl<S: Scalar> GradedDiffOp<S> {
    pub fn zero(n: usize, rank: usize) -> Self {
        GradedDiffOp {
            n,
            rank,
            entries: vec![BTreeMap::new(); rank * rank],
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_empty())
    }

    /// Adds `coeff(x) ∂^β` to entry `(row, col)`.
    pub fn add_coeff(&mut self, row: usize, col: usize, beta: &MultiIndex, coeff: &Poly<S>) {
        if coeff.is_zero() {
            return;
        }
        let e = &mut self.entries[row * self.rank + col];
        let sum = match e.get(beta) {
            Some(old) => old + coeff,
            None => coeff.clone(),
        };
        if sum.is_zero() {
            e.remove(beta);
        } else {
            e.insert(beta.clone(), sum);
        }
    }

    /// Adds `m(x) ∂^β` for a matrix-valued coefficient.
    pub fn add_matpoly(&mut self, beta: &MultiIndex, m: &MatPoly<S>) {
        for r in 0..self.rank {
            for c in 0..self.rank {
                self.add_coeff(r, c, beta, m.entry(r, c));
            }
        }
    }

    /// Adds `p(x) ∂^β · 1`.
    pub fn add_scalar(&mut self, beta: &MultiIndex, p: &Poly<S>) {
        for r in 0..self.rank {
            self.add_coeff(r, r, beta, p);
        }
    }

    pub fn add(&self, o: &GradedDiffOp<S>) -> Self {
        let mut out = self.clone();
        for r in 0..self.rank {
            for c in 0..self.rank {
                for (b, p) in &o.entries[r * self.rank + c] {
                    out.add_coeff(r, c, b, p);
                }
            }
        }
        out
    }

    pub fn scale(&self, s: &S) -> Self {
        let mut out = GradedDiffOp::zero(self.n, self.rank);
        for (k, e) in self.entries.iter().enumerate() {
            for (b, p) in e {
                out.add_coeff(k / self.rank, k % self.rank, b, &p.scale(s));
            }
        }
        out
    }

    /// Every term as `(α, β, P_{αβ})`, ordered by `(α, β)`.
    pub fn terms(&self) -> Vec<(MultiIndex, MultiIndex, Mat<S>)> {
        let mut map: BTreeMap<(MultiIndex, MultiIndex), Mat<S>> = BTreeMap::new();
        for (k, e) in self.entries.iter().enumerate() {
            for (b, p) in e {
                for (a, v) in p.terms() {
                    let m = map
                        .entry((a.clone(), b.clone()))
                        .or_insert_with(|| Mat::zeros(self.rank, self.rank));
                    m[(k / self.rank, k % self.rank)] = v.clone();
                }
            }
        }
        map.into_iter().map(|((a, b), m)| (a, b, m)).collect()
    }

    /// Degrees `|α| - |β|` present.
    pub fn degrees(&self) -> BTreeSet<i64> {
        let mut out = BTreeSet::new();
        for e in &self.entries {
            for (b, p) in e {
                for (a, _) in p.terms() {
                    out.insert(a.degree() as i64 - b.degree() as i64);
                }
            }
        }
        out
    }

    /// Part of degree exactly `k`.
    pub fn degree_part(&self, k: i64) -> Self {
        self.filter_degree(|d| d == k)
    }

    /// Part of degree at most `k`.
    pub fn truncate(&self, k: i64) -> Self {
        self.filter_degree(|d| d <= k)
    }

    fn filter_degree(&self, keep: impl Fn(i64) -> bool) -> Self {
        let mut out = GradedDiffOp::zero(self.n, self.rank);
        for (idx, e) in self.entries.iter().enumerate() {
            for (b, p) in e {
                let q = Poly::from_terms(
                    self.n,
                    p.terms()
                        .filter(|(a, _)| keep(a.degree() as i64 - b.degree() as i64))
                        .map(|(a, v)| (a.clone(), v.clone())),
                );
                out.add_coeff(idx / self.rank, idx % self.rank, b, &q);
            }
        }
        out
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> GradedDiffOp<T> {
        let mut out = GradedDiffOp::zero(self.n, self.rank);
        for (idx, e) in self.entries.iter().enumerate() {
            for (b, p) in e {
                out.add_coeff(idx / self.rank, idx % self.rank, b, &p.map(f));
            }
        }
        out
    }

    /// Applies the operator, keeping output terms of degree at most `max_degree`.
    pub fn apply_trunc(&self, u: &FiberPoly<S>, max_degree: usize) -> Result<FiberPoly<S>> {
        if u.rank() != self.rank || u.nvars() != self.n {
            return Err(QmfError::Dimension(format!(
                "operator of rank {} applied to a section of rank {}",
                self.rank,
                u.rank()
            )));
        }
        let mut out = FiberPoly::zero(self.n, self.rank);
        for r in 0..self.rank {
            let mut acc = Poly::zero(self.n);
            for c in 0..self.rank {
                let uc = u.component(c);
                if uc.is_zero() {
                    continue;
                }
                for (b, p) in &self.entries[r * self.rank + c] {
                    let du = uc.derivative_multi(b);
                    if !du.is_zero() {
                        acc = &acc + &p.mul_trunc(&du, max_degree);
                    }
                }
            }
            *out.component_mut(r) = acc;
        }
        Ok(out)
    }
}

/// Exact application of a differential operator to a fiber polynomial.
pub fn apply_diffop<S: Scalar>(op: &GradedDiffOp<S>, q: &FiberPoly<S>) -> Result<FiberPoly<S>> {
    op.apply_trunc(q, usize::MAX)
}

/// Determinant of a polynomial matrix, truncated at `max_degree`.
fn det_trunc<S: Scalar>(m: &[Poly<S>], n: usize, max_degree: usize) -> Poly<S> {
    if n == 1 {
        return m[0].truncate(max_degree);
    }
    let nv = m[0].nvars();
    let mut acc = Poly::zero(nv);
    for c in 0..n {
        let a = &m[c];
        if a.is_zero() {
            continue;
        }
        let minor: Vec<Poly<S>> = (1..n)
            .flat_map(|r| (0..n).filter(move |&k| k != c).map(move |k| (r, k)))
            .map(|(r, k)| m[r * n + k].clone())
            .collect();
        let term = a.mul_trunc(&det_trunc(&minor, n - 1, max_degree), max_degree);
        acc = if c % 2 == 0 { &acc + &term } else { &acc - &term };
    }
    acc
}

/// `√g = det(g^{ij})^{-1/2}` and its reciprocal, through degree `max_degree`.
pub fn volume_density<S: Scalar>(metric_inverse: &[Poly<S>], n: usize, max_degree: usize) -> Result<(Poly<S>, Poly<S>)> {
    let det = det_trunc(metric_inverse, n, max_degree);
    let u = &det - &Poly::one(n);
    let sqrt_g = Poly::binomial_power(&u, S::from_ratio(-1, 2), max_degree)?;
    let inv_sqrt_g = Poly::binomial_power(&u, S::from_ratio(1, 2), max_degree)?;
    Ok((sqrt_g, inv_sqrt_g))
}

fn gradient<S: Scalar>(phi: &Poly<S>, n: usize) -> Vec<Poly<S>> {
    (0..n).map(|i| phi.derivative(i)).collect()
}

/// `g^{ij} ∂_i f ∂_j h` through `max_degree`.
fn metric_pairing<S: Scalar>(p: &JetProblem<S>, df: &[Poly<S>], dh: &[Poly<S>], max_degree: usize) -> Poly<S> {
    let n = p.n;
    let mut acc = Poly::zero(n);
    for i in 0..n {
        for j in 0..n {
            let g = p.metric(i, j);
            if g.is_zero() || df[i].is_zero() || dh[j].is_zero() {
                continue;
            }
            acc = &acc + &g.mul_trunc(&df[i].mul_trunc(&dh[j], max_degree), max_degree);
        }
    }
    acc
}

/// Solves `g^{ij}∂_iφ∂_jφ = V` through degree `max_degree`, one homogeneous degree at a time.
pub fn solve_eikonal<S: Scalar>(p: &JetProblem<S>, max_degree: usize) -> Result<ScalarJet<S>> {
    p.validate()?;
    let n = p.n;
    let mut phi = Poly::from_terms(
        n,
        p.lambda.iter().enumerate().map(|(i, l)| {
            (MultiIndex::unit(n, i).add(&MultiIndex::unit(n, i)), l.clone() / S::from_i64(2))
        }),
    );
    for d in 3..=max_degree {
        let grad = gradient(&phi, n);
        let known = metric_pairing(p, &grad, &grad, d).homogeneous(d);
        let rhs = &p.potential.homogeneous(d) - &known;
        for (alpha, v) in rhs.terms() {
            let weight = alpha
                .entries()
                .iter()
                .zip(&p.lambda)
                .fold(S::zero(), |acc, (&a, l)| acc + l.clone() * S::from_i64(2 * a as i64));
            phi.add_term(alpha.clone(), v.clone() / weight);
        }
    }
    let residual = eikonal_residual(p, &phi, max_degree);
    if let Some(d) = residual.min_degree() {
        return Err(QmfError::EikonalResidual(d));
    }
    Ok(phi)
}

/// `g^{ij}∂_iφ∂_jφ − V` through `max_degree`.
pub fn eikonal_residual<S: Scalar>(p: &JetProblem<S>, phi: &ScalarJet<S>, max_degree: usize) -> Poly<S> {
    let grad = gradient(phi, p.n);
    &metric_pairing(p, &grad, &grad, max_degree) - &p.potential.truncate(max_degree)
}

/// x-side pieces of the conjugated operator `e^{φ/ħ} H e^{-φ/ħ} = ħ²L + ħA`.
#[derive(Debug, Clone)]
pub struct ConjugatedOperator<S> {
    /// Second-order part `L`, terms of degree at most `x_degree`.
    pub laplace: GradedDiffOp<S>,
    /// First-order part `A = ∇_{2 grad φ} + W + Δφ`, terms of degree at most `x_degree`.
    pub transport: GradedDiffOp<S>,
    /// Divergence-form `Δφ`.
    pub laplacian_phi: Poly<S>,
    pub x_degree: usize,
}

/// Raw drift and potential terms `(b_j, c)` of the Laplace-type operator through `max_degree`.
pub fn raw_laplace_terms<S: Scalar>(p: &JetProblem<S>, max_degree: usize) -> Result<(Vec<MatPoly<S>>, MatPoly<S>)> {
    let n = p.n;
    let r = p.rank;
    match &p.laplace {
        LaplaceData::Raw { drift, endo } => Ok((
            drift.iter().map(|b| b.truncate(max_degree + 1)).collect(),
            endo.truncate(max_degree),
        )),
        LaplaceData::Connection { gamma, endo } => {
            let (sqrt_g, inv_sqrt_g) = volume_density(&p.metric_inverse, n, max_degree + 2)?;
            let s = divergence_terms(p, &sqrt_g, &inv_sqrt_g, max_degree + 1);
            let mut drift = Vec::with_capacity(n);
            for j in 0..n {
                let mut b = MatPoly::scalar_poly(&(-&s[j]), r);
                for i in 0..n {
                    let g = p.metric(i, j);
                    if !g.is_zero() {
                        b = &b - &gamma[i].mul_poly(&g.scale(&S::from_i64(2)), max_degree + 1);
                    }
                }
                drift.push(b);
            }
            let mut c = endo.truncate(max_degree);
            for j in 0..n {
                c = &c - &gamma[j].mul_poly(&s[j], max_degree);
                for i in 0..n {
                    let g = p.metric(i, j);
                    if g.is_zero() {
                        continue;
                    }
                    c = &c - &gamma[j].derivative(i).mul_poly(g, max_degree);
                    c = &c - &gamma[i].mul_trunc(&gamma[j], max_degree).mul_poly(g, max_degree);
                }
            }
            Ok((drift, c))
        }
    }
}

/// `s_j = (1/√g) ∂_i(√g g^{ij})`.
fn divergence_terms<S: Scalar>(p: &JetProblem<S>, sqrt_g: &Poly<S>, inv_sqrt_g: &Poly<S>, max_degree: usize) -> Vec<Poly<S>> {
    let n = p.n;
    (0..n)
        .map(|j| {
            let mut acc = Poly::zero(n);
            for i in 0..n {
                acc = &acc + &sqrt_g.mul_trunc(p.metric(i, j), max_degree + 1).derivative(i);
            }
            inv_sqrt_g.mul_trunc(&acc, max_degree)
        })
        .collect()
}

/// Builds `L` and `A` as x-side differential operators with terms of degree at most `x_degree`.
///
/// `phi` must solve the eikonal equation through degree `x_degree + 2`.
pub fn conjugate_hamiltonian<S: Scalar>(p: &JetProblem<S>, phi: &ScalarJet<S>, x_degree: usize) -> Result<ConjugatedOperator<S>> {
    let n = p.n;
    let r = p.rank;
    let d = x_degree;
    if let Some(deg) = eikonal_residual(p, phi, d + 2).min_degree() {
        return Err(QmfError::EikonalResidual(deg));
    }
    let grad = gradient(phi, n);
    let two = S::from_i64(2);
    let zero_idx = MultiIndex::zeros(n);

    let mut laplace = GradedDiffOp::zero(n, r);
    for i in 0..n {
        for j in 0..n {
            let g = p.metric(i, j).truncate(d + 2);
            let beta = MultiIndex::unit(n, i).add(&MultiIndex::unit(n, j));
            laplace.add_scalar(&beta, &(-&g));
        }
    }
    let (drift, endo) = raw_laplace_terms(p, d)?;
    for (j, b) in drift.iter().enumerate() {
        laplace.add_matpoly(&MultiIndex::unit(n, j), &b.truncate(d + 1));
    }
    laplace.add_matpoly(&zero_idx, &endo.truncate(d));

    let mut transport = GradedDiffOp::zero(n, r);
    let mut g_dphi = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = Poly::zero(n);
        for i in 0..n {
            acc = &acc + &p.metric(i, j).mul_trunc(&grad[i], d + 1);
        }
        transport.add_scalar(&MultiIndex::unit(n, j), &acc.scale(&two));
        g_dphi.push(acc);
    }

    let (sqrt_g, inv_sqrt_g) = volume_density(&p.metric_inverse, n, d + 2)?;
    let mut flux = Poly::zero(n);
    for i in 0..n {
        flux = &flux + &sqrt_g.mul_trunc(&g_dphi[i], d + 1).derivative(i);
    }
    let laplacian_phi = inv_sqrt_g.mul_trunc(&flux, d);

    let mut zeroth = p.endomorphism.truncate(d);
    match &p.laplace {
        LaplaceData::Connection { gamma, .. } => {
            zeroth = &zeroth + &MatPoly::scalar_poly(&laplacian_phi, r);
            for (j, gj) in gamma.iter().enumerate() {
                zeroth = &zeroth + &gj.mul_poly(&g_dphi[j].scale(&two), d);
            }
        }
        LaplaceData::Raw { .. } => {
            let mut hess = Poly::zero(n);
            for i in 0..n {
                for j in 0..n {
                    hess = &hess + &p.metric(i, j).mul_trunc(&grad[i].derivative(j), d);
                }
            }
            zeroth = &zeroth + &MatPoly::scalar_poly(&hess, r);
            for (j, b) in drift.iter().enumerate() {
                zeroth = &zeroth - &b.mul_poly(&grad[j], d);
            }
        }
    }
    transport.add_matpoly(&zero_idx, &zeroth);

    Ok(ConjugatedOperator {
        laplace: laplace.truncate(d as i64),
        transport: transport.truncate(d as i64),
        laplacian_phi,
        x_degree: d,
    })
}

/// The y-side graded family `Q_j = L_{2j-2} + A_{2j}`, for `0 ≤ j ≤ max_order`.
#[derive(Debug, Clone)]
pub struct RescaledFamily<S> {
    pub pieces: BTreeMap<HalfInt, GradedDiffOp<S>>,
    pub max_order: HalfInt,
    pub n: usize,
    pub rank: usize,
}

impl<S: Scalar> RescaledFamily<S> {
    pub fn get(&self, j: HalfInt) -> Option<&GradedDiffOp<S>> {
        self.pieces.get(&j)
    }

    pub fn q0(&self) -> GradedDiffOp<S> {
        self.pieces
            .get(&HalfInt::ZERO)
            .cloned()
            .unwrap_or_else(|| GradedDiffOp::zero(self.n, self.rank))
    }

    /// Orders `j ≥ 1/2` with a nonzero piece.
    pub fn perturbation_orders(&self) -> Vec<HalfInt> {
        self.pieces
            .iter()
            .filter(|(j, q)| **j > HalfInt::ZERO && !q.is_zero())
            .map(|(j, _)| *j)
            .collect()
    }
}

/// Conjugating `x^α ∂^β` by the rescaling yields `ħ^{(|α|-|β|)/2} y^α ∂^β`, so an
/// `L` term of degree `k` lands in `Q_{1+k/2}` and an `A` term in `Q_{k/2}`.
pub fn rescale_operator<S: Scalar>(ops: &ConjugatedOperator<S>, max_order: HalfInt) -> Result<RescaledFamily<S>> {
    let need = (max_order.doubled.max(0)) as usize;
    if need > ops.x_degree {
        return Err(QmfError::Truncation {
            required: need,
            available: ops.x_degree,
        });
    }
    let n = ops.laplace.nvars();
    let rank = ops.laplace.rank();
    let mut pieces: BTreeMap<HalfInt, GradedDiffOp<S>> = BTreeMap::new();
    for j in HalfInt::range_inclusive(HalfInt::ZERO, max_order) {
        let mut q = ops.transport.degree_part(j.doubled);
        let l_deg = j.doubled - 2;
        if l_deg >= -2 {
            q = q.add(&ops.laplace.degree_part(l_deg));
        }
        pieces.insert(j, q);
    }
    Ok(RescaledFamily {
        pieces,
        max_order,
        n,
        rank,
    })
}

/// `Σ_ν (−∂²_ν + 2λ_ν y_ν ∂_ν + λ_ν) + W(p)`, built directly.
pub fn harmonic_model<S: Scalar>(lambda: &[S], w0: &Mat<S>) -> GradedDiffOp<S> {
    let n = lambda.len();
    let r = w0.rows();
    let mut q = GradedDiffOp::zero(n, r);
    let mut trace = S::zero();
    for (i, l) in lambda.iter().enumerate() {
        let e = MultiIndex::unit(n, i);
        q.add_scalar(&e.add(&e), &Poly::constant(n, -S::one()));
        q.add_scalar(&e, &Poly::monomial(e.clone(), l.clone() * S::from_i64(2)));
        trace = trace + l.clone();
    }
    q.add_scalar(&MultiIndex::zeros(n), &Poly::constant(n, trace));
    q.add_matpoly(&MultiIndex::zeros(n), &MatPoly::from_constant(w0, n));
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from_ratio(a, b)
    }

    fn mono(e: Vec<u32>, c: Rational) -> Poly<Rational> {
        Poly::monomial(MultiIndex::new(e), c)
    }

    #[test]
    fn harmonic_eikonal_is_quadratic() {
        let p = JetProblem::harmonic(vec![q(1, 1)], vec![q(0, 1)]);
        let phi = solve_eikonal(&p, 8).unwrap();
        assert_eq!(phi, mono(vec![2], q(1, 2)));
    }

    #[test]
    fn decoupled_two_dimensional() {
        let p = JetProblem::harmonic(vec![q(1, 1), q(2, 1)], vec![q(0, 1)]);
        let phi = solve_eikonal(&p, 6).unwrap();
        assert_eq!(phi, &mono(vec![2, 0], q(1, 2)) + &mono(vec![0, 2], q(1, 1)));
    }

    #[test]
    fn rejects_unnormalized_quadratic() {
        let p = JetProblem::new(
            vec![q(1, 1)],
            mono(vec![2], q(2, 1)),
            MatPoly::zero(1, 1),
        );
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("coordinates not normalized"));
    }

    #[test]
    fn harmonic_conjugation() {
        let p = JetProblem::harmonic(vec![q(1, 1)], vec![q(0, 1)]);
        let phi = solve_eikonal(&p, 6).unwrap();
        let ops = conjugate_hamiltonian(&p, &phi, 4).unwrap();
        let mut a = GradedDiffOp::zero(1, 1);
        a.add_scalar(&MultiIndex::new(vec![1]), &mono(vec![1], q(2, 1)));
        a.add_scalar(&MultiIndex::new(vec![0]), &mono(vec![0], q(1, 1)));
        assert_eq!(ops.transport, a);
        let mut l = GradedDiffOp::zero(1, 1);
        l.add_scalar(&MultiIndex::new(vec![2]), &mono(vec![0], q(-1, 1)));
        assert_eq!(ops.laplace, l);
    }

    #[test]
    fn y_times_derivative() {
        let mut op = GradedDiffOp::<Rational>::zero(1, 1);
        op.add_scalar(&MultiIndex::new(vec![1]), &mono(vec![1], q(1, 1)));
        let u = FiberPoly::unit(mono(vec![2], q(1, 1)), 1, 0);
        assert_eq!(apply_diffop(&op, &u).unwrap(), u.scale(&q(2, 1)));
    }
}
