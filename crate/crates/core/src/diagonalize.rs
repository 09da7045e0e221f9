//! Matrices over the truncated series field and their symmetric eigendecomposition.
//!
//! The level is described in the basis `f_k = Π h_k`, whose Gram matrix starts
//! with `D₀ = diag(‖h_k‖²)` rather than the identity. Everything below works
//! with a diagonal constant metric so that exact mode never needs a square root.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{QmfError, Result};
use crate::hermite::LevelParity;
use crate::linalg::Mat;
use crate::pairing::Pairing;
use crate::scalar::{rationalize, Scalar};
use crate::series::{FormalScalarSeries, HalfInt, S0Series};

/// Relative tolerance for float-mode eigenvalue clustering.
pub const SPLIT_TOL: f64 = 1e-9;

/// `Σ_t ħ^{t/2} terms[t]`, known through exponent `prec`; only nonnegative powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix<S> {
    rows: usize,
    cols: usize,
    terms: Vec<Mat<S>>,
    prec: HalfInt,
}

fn term_count(prec: HalfInt) -> usize {
    (prec.doubled + 1).max(0) as usize
}

impl<S: Scalar> SeriesMatrix<S> {
    pub fn zeros(rows: usize, cols: usize, prec: HalfInt) -> Self {
        SeriesMatrix {
            rows,
            cols,
            terms: vec![Mat::zeros(rows, cols); term_count(prec)],
            prec,
        }
    }

    pub fn constant(m: Mat<S>, prec: HalfInt) -> Self {
        let mut out = Self::zeros(m.rows(), m.cols(), prec);
        if let Some(t) = out.terms.first_mut() {
            *t = m;
        }
        out
    }

    pub fn identity(n: usize, prec: HalfInt) -> Self {
        Self::constant(Mat::identity(n), prec)
    }

    pub fn from_terms(terms: Vec<Mat<S>>, prec: HalfInt) -> Self {
        let rows = terms.first().map(|m| m.rows()).unwrap_or(0);
        let cols = terms.first().map(|m| m.cols()).unwrap_or(0);
        let mut out = Self::zeros(rows, cols, prec);
        for (t, m) in terms.into_iter().enumerate().take(out.terms.len()) {
            out.terms[t] = m;
        }
        out
    }

    /// Builds a matrix from scalar series; every entry must have nonnegative valuation.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> FormalScalarSeries<S>,
    ) -> Result<Self> {
        let entries: Vec<Vec<FormalScalarSeries<S>>> = (0..rows).map(|i| (0..cols).map(|j| f(i, j)).collect()).collect();
        let prec = entries
            .iter()
            .flatten()
            .map(|s| s.prec())
            .min()
            .unwrap_or(HalfInt::ZERO);
        let mut out = Self::zeros(rows, cols, prec);
        for (i, row) in entries.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                if let Some(v) = s.valuation() {
                    if v < HalfInt::ZERO {
                        return Err(QmfError::LeadingTerm(format!("entry ({i},{j}) starts at ħ^{v}")));
                    }
                }
                for (t, m) in out.terms.iter_mut().enumerate() {
                    m.set(i, j, s.coeff(HalfInt::from_doubled(t as i64)));
                }
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn prec(&self) -> HalfInt {
        self.prec
    }

    /// Coefficient of `ħ^{t/2}`.
    pub fn coeff(&self, t: usize) -> Mat<S> {
        self.terms
            .get(t)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(self.rows, self.cols))
    }

    pub fn terms(&self) -> &[Mat<S>] {
        &self.terms
    }

    pub fn entry(&self, i: usize, j: usize) -> FormalScalarSeries<S> {
        FormalScalarSeries::from_terms(
            self.terms
                .iter()
                .enumerate()
                .map(|(t, m)| (HalfInt::from_doubled(t as i64), m[(i, j)].clone())),
            self.prec,
        )
    }

    pub fn truncate(&self, prec: HalfInt) -> Self {
        let prec = prec.min(self.prec);
        Self::from_terms(self.terms[..term_count(prec)].to_vec(), prec).with_shape(self.rows, self.cols)
    }

    fn with_shape(mut self, rows: usize, cols: usize) -> Self {
        self.rows = rows;
        self.cols = cols;
        if self.terms.iter().any(|m| m.rows() != rows || m.cols() != cols) {
            self.terms = self
                .terms
                .into_iter()
                .map(|m| if m.rows() == rows && m.cols() == cols { m } else { Mat::zeros(rows, cols) })
                .collect();
        }
        self
    }

    pub fn transpose(&self) -> Self {
        SeriesMatrix {
            rows: self.cols,
            cols: self.rows,
            terms: self.terms.iter().map(|m| m.transpose()).collect(),
            prec: self.prec,
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        SeriesMatrix {
            terms: self.terms.iter().map(|m| m.scale(c)).collect(),
            ..self.clone()
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T + Copy) -> SeriesMatrix<T> {
        SeriesMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: self.terms.iter().map(|m| m.map(f)).collect(),
            prec: self.prec,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "series matrix shape mismatch");
        let prec = self.prec.min(o.prec);
        let mut out = Self::zeros(self.rows, o.cols, prec);
        for (a, ma) in self.terms.iter().enumerate() {
            if ma.is_zero() {
                continue;
            }
            for (b, mb) in o.terms.iter().enumerate() {
                if a + b >= out.terms.len() {
                    break;
                }
                if !mb.is_zero() {
                    out.terms[a + b] = &out.terms[a + b] + &(ma * mb);
                }
            }
        }
        out
    }

    pub fn left_const(&self, m: &Mat<S>) -> Self {
        SeriesMatrix {
            rows: m.rows(),
            cols: self.cols,
            terms: self.terms.iter().map(|t| m * t).collect(),
            prec: self.prec,
        }
    }

    pub fn right_const(&self, m: &Mat<S>) -> Self {
        SeriesMatrix {
            rows: self.rows,
            cols: m.cols(),
            terms: self.terms.iter().map(|t| t * m).collect(),
            prec: self.prec,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let prec = self.prec.min(o.prec);
        let n = term_count(prec);
        SeriesMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: (0..n).map(|t| &self.terms[t] + &o.terms[t]).collect(),
            prec,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let prec = self.prec.min(o.prec);
        let n = term_count(prec);
        SeriesMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: (0..n).map(|t| &self.terms[t] - &o.terms[t]).collect(),
            prec,
        }
    }

    /// Divides by `ħ^{t/2}`; the first `t` coefficients must vanish.
    pub fn shift_down(&self, t: usize) -> Self {
        let prec = self.prec - HalfInt::from_doubled(t as i64);
        SeriesMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: self.terms.iter().skip(t).cloned().collect(),
            prec,
        }
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        SeriesMatrix {
            rows: rows.len(),
            cols: cols.len(),
            terms: self.terms.iter().map(|m| m.select(rows, cols)).collect(),
            prec: self.prec,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.terms.iter().all(|m| m.is_symmetric())
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.iter().map(|m| m.max_abs()).fold(0.0, f64::max)
    }

    /// `(1 + X)^{-1/2}` for `self = 1 + X`, `X` without constant term.
    pub fn inverse_sqrt(&self) -> Result<Self> {
        let n = self.rows;
        let lead = self.coeff(0);
        if !(&lead - &Mat::identity(n)).is_zero() {
            return Err(QmfError::LeadingTerm("Gram matrix does not start with the identity".into()));
        }
        let x = self.sub(&Self::identity(n, self.prec));
        let mut out = Self::identity(n, self.prec);
        let mut power = Self::identity(n, self.prec);
        let mut c = S::one();
        for k in 1..term_count(self.prec) {
            power = power.mul(&x);
            if power.max_abs() == 0.0 && power.terms.iter().all(|m| m.is_zero()) {
                break;
            }
            // binom(−1/2, k) = binom(−1/2, k−1) · (−1/2 − k + 1)/k
            c = c * S::from_ratio(-(2 * k as i64 - 1), 2 * k as i64);
            out = out.add(&power.scale(&c));
        }
        Ok(out)
    }
}

/// `((f_k, f_l))`.
pub fn gram_matrix<S: Scalar>(f: &[S0Series<S>], pairing: &Pairing<S>) -> Result<SeriesMatrix<S>> {
    cross_matrix(f, f, pairing)
}

/// `((f_k, g_l))`.
pub fn cross_matrix<S: Scalar>(f: &[S0Series<S>], g: &[S0Series<S>], pairing: &Pairing<S>) -> Result<SeriesMatrix<S>> {
    let mut entries = Vec::with_capacity(f.len() * g.len());
    for u in f {
        for v in g {
            entries.push(pairing.pair(u, v)?);
        }
    }
    SeriesMatrix::from_entries(f.len(), g.len(), |i, j| entries[i * g.len() + j].clone())
}

/// `A^{-1/2}` for a symmetric series matrix with identity leading term.
pub fn matrix_inverse_sqrt<S: Scalar>(a: &SeriesMatrix<S>) -> Result<SeriesMatrix<S>> {
    a.inverse_sqrt()
}

/// `T = (D₀⁻¹A)^{-1/2}`, which satisfies `TᵀAT = D₀` when `A` is symmetric with leading term `D₀`.
pub fn weighted_inverse_sqrt<S: Scalar>(a: &SeriesMatrix<S>, d0: &[S]) -> Result<SeriesMatrix<S>> {
    let inv = Mat::diag(&d0.iter().map(|d| d.inv()).collect::<Vec<_>>());
    a.left_const(&inv).inverse_sqrt()
}

/// Transformed effective matrix of a level.
#[derive(Debug, Clone)]
pub struct EffectiveMatrix<S> {
    pub gram: SeriesMatrix<S>,
    pub cross: SeriesMatrix<S>,
    pub metric: Vec<S>,
    /// `T` with `TᵀAT = D₀`.
    pub transform: SeriesMatrix<S>,
    /// `M = TᵀCT`, symmetric with leading term `E₀ D₀`.
    pub matrix: SeriesMatrix<S>,
}

/// `M = TᵀCT` from the Gram matrix `A` and `C = ((f_k, Q f_l))`.
pub fn effective_matrix<S: Scalar>(gram: SeriesMatrix<S>, cross: SeriesMatrix<S>, metric: Vec<S>) -> Result<EffectiveMatrix<S>> {
    let lead = gram.coeff(0);
    if !(&lead - &Mat::diag(&metric)).is_zero() {
        return Err(QmfError::LeadingTerm("Gram matrix leading term differs from the basis norms".into()));
    }
    let transform = weighted_inverse_sqrt(&gram, &metric)?;
    let matrix = transform.transpose().mul(&cross).mul(&transform);
    Ok(EffectiveMatrix {
        gram,
        cross,
        metric,
        transform,
        matrix,
    })
}

/// Eigenvalue series and `M`-eigenvector columns with `UᵀD₀U = diag(norms)`.
#[derive(Debug, Clone)]
pub struct EigenResult<S> {
    pub values: Vec<FormalScalarSeries<S>>,
    pub vectors: SeriesMatrix<S>,
    /// Constant squared norms of the columns in the metric.
    pub norms: Vec<S>,
    /// Orders at which the eigenvalues separated.
    pub split_orders: Vec<HalfInt>,
}

impl<S: Scalar> EigenResult<S> {
    /// Precision lost on the eigenvectors through splitting.
    pub fn vector_loss(&self, prec: HalfInt) -> HalfInt {
        prec - self.vectors.prec()
    }
}

struct Split<S> {
    /// Cluster eigenvalues, ascending.
    values: Vec<S>,
    /// Column blocks of `U0` for each cluster.
    blocks: Vec<Vec<usize>>,
    u0: Mat<S>,
    gamma0: Vec<S>,
}

fn scalar_part<S: Scalar>(m: &Mat<S>) -> Option<S> {
    if S::EXACT {
        return m.as_scalar();
    }
    let n = m.rows();
    let mean = (0..n).fold(S::zero(), |a, i| a + m[(i, i)].clone()) / S::from_i64(n as i64);
    let scale = m.max_abs().max(1.0);
    let dev = (m - &Mat::scalar(n, mean.clone())).max_abs();
    (dev <= SPLIT_TOL * scale).then_some(mean)
}

/// Eigenvalues of `Z`, self-adjoint for the metric `G`, as `f64` ascending with
/// the orthonormal eigenvectors of `G^{1/2} Z G^{-1/2}`.
fn float_spectrum<S: Scalar>(z: &Mat<S>, g: &[S]) -> (Vec<f64>, DMatrix<f64>) {
    let n = z.rows();
    let sg: Vec<f64> = g.iter().map(|x| x.to_f64().sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let a = sg[i] * z[(i, j)].to_f64() / sg[j];
        let b = sg[j] * z[(j, i)].to_f64() / sg[i];
        0.5 * (a + b)
    });
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vecs)
}

fn clusters(values: &[f64], order: HalfInt, exact: bool) -> Result<Vec<Vec<usize>>> {
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = if exact { 1e-7 } else { SPLIT_TOL };
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - values[*c.last().unwrap()]).abs() <= tol * scale => c.push(i),
            _ => {
                if let Some(c) = out.last() {
                    let gap = (v - values[*c.last().unwrap()]).abs();
                    if !exact && gap < 100.0 * tol * scale {
                        return Err(QmfError::AmbiguousSplitting { order, gap });
                    }
                }
                out.push(vec![i]);
            }
        }
    }
    Ok(out)
}

fn split_exact<S: Scalar>(z: &Mat<S>, g: &[S], order: HalfInt) -> Result<Split<S>> {
    let n = z.rows();
    let (approx, _) = float_spectrum(z, g);
    let groups = clusters(&approx, order, true)?;
    let mut values = Vec::new();
    let mut blocks = Vec::new();
    let mut columns: Vec<Vec<S>> = Vec::new();
    for grp in groups {
        let mean = grp.iter().map(|&i| approx[i]).sum::<f64>() / grp.len() as f64;
        let mut found = None;
        for cand in rationalize(mean, 1_000_000).into_iter().rev() {
            if (cand_f64(&cand) - mean).abs() > 1e-6 * mean.abs().max(1.0) {
                continue;
            }
            let e = S::from_rational(&cand);
            let shifted = z - &Mat::scalar(n, e.clone());
            let null = shifted.nullspace();
            if null.len() == grp.len() {
                found = Some((e, null));
                break;
            }
        }
        let (e, null) = found.ok_or(QmfError::IrrationalSplitting { order })?;
        let start = columns.len();
        // Gram–Schmidt in the metric, without normalization
        for v in null {
            let mut w = v.clone();
            for prev in &columns[start..] {
                let num = metric_dot(prev, &v, g);
                let den = metric_dot(prev, prev, g);
                let f = num / den;
                for (wi, pi) in w.iter_mut().zip(prev) {
                    *wi = wi.clone() - f.clone() * pi.clone();
                }
            }
            columns.push(w);
        }
        values.push(e);
        blocks.push((start..columns.len()).collect());
    }
    if columns.len() != n {
        return Err(QmfError::IrrationalSplitting { order });
    }
    let u0 = Mat::from_fn(n, n, |r, c| columns[c][r].clone());
    let gamma0 = columns.iter().map(|c| metric_dot(c, c, g)).collect();
    Ok(Split {
        values,
        blocks,
        u0,
        gamma0,
    })
}

fn cand_f64(q: &crate::scalar::Rational) -> f64 {
    <crate::scalar::Rational as Scalar>::to_f64(q)
}

fn split_float<S: Scalar>(z: &Mat<S>, g: &[S], order: HalfInt) -> Result<Split<S>> {
    let n = z.rows();
    let (approx, vecs) = float_spectrum(z, g);
    let groups = clusters(&approx, order, false)?;
    let sg: Vec<f64> = g.iter().map(|x| x.to_f64().sqrt()).collect();
    let u0 = Mat::from_fn(n, n, |r, c| S::from_f64(vecs[(r, c)] / sg[r]));
    let values = groups
        .iter()
        .map(|grp| S::from_f64(grp.iter().map(|&i| approx[i]).sum::<f64>() / grp.len() as f64))
        .collect();
    Ok(Split {
        values,
        blocks: groups,
        u0,
        gamma0: vec![S::one(); n],
    })
}

fn metric_dot<S: Scalar>(a: &[S], b: &[S], g: &[S]) -> S {
    a.iter()
        .zip(b)
        .zip(g)
        .fold(S::zero(), |acc, ((x, y), w)| acc + x.clone() * w.clone() * y.clone())
}

struct Decomposition<S> {
    values: Vec<FormalScalarSeries<S>>,
    vectors: SeriesMatrix<S>,
    norms: Vec<S>,
    splits: Vec<HalfInt>,
}

/// Block-diagonalizes `D` (leading term `diag(values per block)`) by `V` with
/// `VᵀΓV = Γ`, returning `V` and the block-diagonal `Λ`.
fn block_diagonalize<S: Scalar>(d: &SeriesMatrix<S>, split: &Split<S>) -> (SeriesMatrix<S>, SeriesMatrix<S>) {
    let n = d.rows();
    let len = d.terms().len();
    let mut cluster_of = vec![0; n];
    for (a, blk) in split.blocks.iter().enumerate() {
        for &i in blk {
            cluster_of[i] = a;
        }
    }
    let gamma = &split.gamma0;
    let mut v: Vec<Mat<S>> = vec![Mat::identity(n)];
    let mut lam: Vec<Mat<S>> = vec![d.coeff(0)];
    for k in 1..len {
        let mut y: Mat<S> = Mat::zeros(n, n);
        for i in 1..=k {
            y = &y + &(&d.coeff(i) * &v[k - i]);
        }
        let mut vl: Mat<S> = Mat::zeros(n, n);
        for i in 1..k {
            vl = &vl + &(&v[k - i] * &lam[i]);
        }
        let mut r: Mat<S> = Mat::zeros(n, n);
        for i in 1..k {
            r = &r + &(&(&v[i].transpose() * &Mat::diag(gamma)) * &v[k - i]);
        }
        let mut vk = Mat::zeros(n, n);
        let mut lk = Mat::zeros(n, n);
        for row in 0..n {
            for col in 0..n {
                let (a, b) = (cluster_of[row], cluster_of[col]);
                if a != b {
                    let gap = split.values[a].clone() - split.values[b].clone();
                    vk.set(row, col, (vl[(row, col)].clone() - y[(row, col)].clone()) / gap);
                } else {
                    vk.set(row, col, S::from_ratio(-1, 2) * r[(row, col)].clone() / gamma[row].clone());
                    lk.set(row, col, y[(row, col)].clone() - vl[(row, col)].clone());
                }
            }
        }
        v.push(vk);
        lam.push(lk);
    }
    (SeriesMatrix::from_terms(v, d.prec()), SeriesMatrix::from_terms(lam, d.prec()))
}

fn decompose<S: Scalar>(x: &SeriesMatrix<S>, g: &[S]) -> Result<Decomposition<S>> {
    let n = x.rows();
    let prec = x.prec();
    let mut scalars: Vec<S> = Vec::new();
    let mut first_split = None;
    for (t, m) in x.terms().iter().enumerate() {
        match scalar_part(m) {
            Some(s) => scalars.push(s),
            None => {
                first_split = Some(t);
                break;
            }
        }
    }
    let scalar_series = |upto: usize| {
        FormalScalarSeries::from_terms(
            scalars[..upto]
                .iter()
                .enumerate()
                .map(|(t, s)| (HalfInt::from_doubled(t as i64), s.clone())),
            prec,
        )
    };
    let Some(t_star) = first_split.filter(|_| n > 1) else {
        let values = if n == 1 {
            vec![x.entry(0, 0)]
        } else {
            vec![scalar_series(scalars.len()); n]
        };
        return Ok(Decomposition {
            values,
            vectors: SeriesMatrix::identity(n, prec),
            norms: g.to_vec(),
            splits: Vec::new(),
        });
    };
    let order = HalfInt::from_doubled(t_star as i64);
    let z = x.coeff(t_star);
    let split = if S::EXACT { split_exact(&z, g, order)? } else { split_float(&z, g, order)? };

    // representation of X in the columns of U0
    let gmat = Mat::diag(g);
    let ginv = Mat::diag(&split.gamma0.iter().map(|c| c.inv()).collect::<Vec<_>>());
    let left = &(&ginv * &split.u0.transpose()) * &gmat;
    let mut xt = x.left_const(&left).right_const(&split.u0);
    for (t, s) in scalars.iter().enumerate() {
        xt.terms[t] = &xt.terms[t] - &Mat::scalar(n, s.clone());
    }
    let d = xt.shift_down(t_star);
    let (v, lam) = block_diagonalize(&d, &split);

    let mut values = vec![FormalScalarSeries::zero(prec); n];
    let mut norms = vec![S::zero(); n];
    let mut inner = SeriesMatrix::zeros(n, n, d.prec());
    let mut splits = vec![order];
    let base = scalar_series(t_star);
    for blk in &split.blocks {
        let sub = lam.select(blk, blk);
        let gsub: Vec<S> = blk.iter().map(|&i| split.gamma0[i].clone()).collect();
        let dec = decompose(&sub, &gsub)?;
        splits.extend(dec.splits.iter().map(|s| *s + order));
        inner.prec = inner.prec.min(dec.vectors.prec());
        for (a, &row) in blk.iter().enumerate() {
            for (b, &col) in blk.iter().enumerate() {
                for t in 0..inner.terms.len() {
                    let c = dec.vectors.coeff(t)[(a, b)].clone();
                    inner.terms[t].set(row, col, c);
                }
            }
            values[row] = &base + &dec.values[a].shift(order).with_prec(prec);
            norms[row] = dec.norms[a].clone();
        }
    }
    let inner = inner.truncate(inner.prec);
    let vectors = SeriesMatrix::constant(split.u0.clone(), prec).mul(&v).mul(&inner);
    splits.sort();
    splits.dedup();
    Ok(Decomposition {
        values,
        vectors,
        norms,
        splits,
    })
}

/// Eigendecomposition of `M v = E D₀ v` for symmetric `M` and diagonal `D₀`.
///
/// Columns come out ordered by their eigenvalue series, each with its
/// largest leading entry positive.
pub fn formal_eigendecomposition<S: Scalar>(m: &SeriesMatrix<S>, metric: &[S]) -> Result<EigenResult<S>> {
    let n = m.rows();
    if !m.is_symmetric() && S::EXACT {
        return Err(QmfError::Invalid("effective matrix is not symmetric".into()));
    }
    let inv = Mat::diag(&metric.iter().map(|d| d.inv()).collect::<Vec<_>>());
    let x = m.left_const(&inv);
    let dec = decompose(&x, metric)?;
    let mut vectors = dec.vectors;
    let lead = vectors.coeff(0);
    for c in 0..n {
        let mut best = 0;
        for r in 0..n {
            if lead[(r, c)].abs_f64() > lead[(best, c)].abs_f64() + 1e-12 {
                best = r;
            }
        }
        if lead[(best, c)].to_f64() < 0.0 {
            for t in vectors.terms.iter_mut() {
                for r in 0..n {
                    let v = -t[(r, c)].clone();
                    t.set(r, c, v);
                }
            }
        }
    }
    Ok(EigenResult {
        values: dec.values,
        vectors,
        norms: dec.norms,
        split_orders: dec.splits,
    })
}

/// Outcome of the half-integer vanishing check on eigenvalue series.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityReport {
    pub exempt: bool,
    pub max_half_integer: f64,
    pub passed: bool,
}

/// For uniform-parity levels, every half-integer eigenvalue coefficient must vanish.
pub fn parity_filter<S: Scalar>(result: &EigenResult<S>, parity: LevelParity, tol: f64) -> ParityReport {
    if !parity.is_uniform() {
        return ParityReport {
            exempt: true,
            max_half_integer: 0.0,
            passed: true,
        };
    }
    let worst = half_integer_defect(&result.values);
    let passed = if S::EXACT { worst == 0.0 } else { worst <= tol };
    ParityReport {
        exempt: false,
        max_half_integer: worst,
        passed,
    }
}

/// Largest half-integer coefficient among the given series.
pub fn half_integer_defect<S: Scalar>(values: &[FormalScalarSeries<S>]) -> f64 {
    values
        .iter()
        .flat_map(|s| s.terms().filter(|(e, _)| !e.is_integer()).map(|(_, c)| c.abs_f64()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Coefficientwise defect of `M U − D₀ U diag(E)` through the vector precision.
pub fn eigen_defect<S: Scalar>(m: &SeriesMatrix<S>, metric: &[S], result: &EigenResult<S>) -> f64 {
    let u = &result.vectors;
    let n = m.rows();
    let prec = u.prec();
    let lhs = m.mul(u).truncate(prec);
    let d0u = u.left_const(&Mat::diag(metric));
    let mut worst: f64 = 0.0;
    let mut rhs_terms: BTreeMap<usize, Mat<S>> = BTreeMap::new();
    for (c, val) in result.values.iter().enumerate() {
        for (e, coef) in val.terms() {
            for t in 0..d0u.terms().len() {
                let idx = e.doubled as usize + t;
                if idx >= lhs.terms().len() {
                    break;
                }
                let entry = rhs_terms.entry(idx).or_insert_with(|| Mat::zeros(n, n));
                for r in 0..n {
                    let v = entry[(r, c)].clone() + coef.clone() * d0u.coeff(t)[(r, c)].clone();
                    entry.set(r, c, v);
                }
            }
        }
    }
    for (t, l) in lhs.terms().iter().enumerate() {
        let r = rhs_terms.remove(&t).unwrap_or_else(|| Mat::zeros(n, n));
        worst = worst.max((l - &r).max_abs());
    }
    worst
}
