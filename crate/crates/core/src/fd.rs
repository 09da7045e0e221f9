//! Finite-difference eigenvalues of a scalar one-dimensional problem, compared
//! with a truncated eigenvalue series.
//!
//! `H = −ħ² d²/dx² + V + ħW` on `[−a, a]` with Dirichlet ends, second-order
//! central differences, and Sturm-sequence bisection on the tridiagonal matrix.

use rayon::prelude::*;

use crate::error::{QmfError, Result};
use crate::operator::{JetProblem, LaplaceData};
use crate::scalar::Scalar;
use crate::series::{FormalScalarSeries, HalfInt, MultiIndex, Poly};

/// `φ(±a)/ħ` must exceed this, so that `e^{−φ/ħ} < 1e−14` at the ends.
const DECAY_EXPONENT: f64 = 32.3;
const DECAY_MARGIN: f64 = 1.25;

/// One value of ħ.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSample {
    pub hbar: f64,
    pub half_width: f64,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub series: f64,
    pub error: f64,
    /// Estimated discretization error of the extrapolated value.
    pub discretization: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub samples: Vec<FdSample>,
    /// Least-squares slope of `log error` against `log ħ`.
    pub slope: f64,
    pub required_slope: f64,
    /// The series has no corrections beyond the leading term; judged by absolute error.
    pub exact_series: bool,
    pub passed: bool,
}

impl FdReport {
    /// `ħ,error` lines for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hbar,error\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.hbar, s.error));
        }
        out
    }
}

fn eval(p: &Poly<f64>, x: f64) -> f64 {
    p.eval_f64(&[x])
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
pub fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, a) in diag.iter().enumerate() {
        let b2 = if i == 0 { 0.0 } else { off * off };
        d = a - x - b2 / d;
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// `index`-th (zero-based) eigenvalue of the tridiagonal matrix by bisection.
pub fn tridiagonal_eigenvalue(diag: &[f64], off: f64, index: usize) -> f64 {
    let lo0 = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * off.abs();
    let hi0 = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * off.abs();
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn fd_eigenvalue(v: &Poly<f64>, w: &Poly<f64>, hbar: f64, a: f64, interior: usize, index: usize) -> f64 {
    let h = 2.0 * a / (interior + 1) as f64;
    let k = hbar * hbar / (h * h);
    let diag: Vec<f64> = (1..=interior)
        .map(|i| {
            let x = -a + h * i as f64;
            2.0 * k + eval(v, x) + hbar * eval(w, x)
        })
        .collect();
    tridiagonal_eigenvalue(&diag, -k, index)
}

/// `∫_0^x √V` by composite Simpson, for either sign of `x`.
fn agmon_distance(v: &Poly<f64>, x: f64) -> f64 {
    let steps = 2000;
    let h = x / steps as f64;
    let f = |t: f64| eval(v, t).max(0.0).sqrt();
    let mut s = f(0.0) + f(x);
    for i in 1..steps {
        let t = h * i as f64;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    (s * h / 3.0).abs()
}

fn half_width(v: &Poly<f64>, hbar: f64) -> f64 {
    let target = DECAY_EXPONENT * DECAY_MARGIN * hbar;
    let mut a: f64 = 0.5;
    while a < 1e3 {
        if agmon_distance(v, a) > target && agmon_distance(v, -a) > target {
            return a;
        }
        a *= 1.1;
    }
    a
}

/// Checks that the problem is a flat scalar 1-D operator with confining potential.
fn scalar_data<S: Scalar>(p: &JetProblem<S>) -> Result<(Poly<f64>, Poly<f64>)> {
    if p.n != 1 || p.rank != 1 {
        return Err(QmfError::Invalid("numeric crosscheck needs a scalar one-dimensional problem".into()));
    }
    let flat = p.metric_inverse[0] == Poly::one(1);
    let no_connection = match &p.laplace {
        LaplaceData::Connection { gamma, endo } => gamma.iter().all(|g| g.is_zero()) && endo.is_zero(),
        LaplaceData::Raw { drift, endo } => drift.iter().all(|g| g.is_zero()) && endo.is_zero(),
    };
    if !flat || !no_connection {
        return Err(QmfError::Invalid("numeric crosscheck needs a flat metric and no first-order terms".into()));
    }
    let v = p.potential.map(|c| c.to_f64());
    let deg = v.degree().unwrap_or(0);
    let lead = v.coeff(&MultiIndex::new(vec![deg as u32]));
    if !deg.is_multiple_of(2) || lead <= 0.0 {
        return Err(QmfError::Invalid("numeric crosscheck needs a confining polynomial potential".into()));
    }
    Ok((v, p.endomorphism.entry(0, 0).map(|c| c.to_f64())))
}

/// Compares finite-difference eigenvalues with `ħ · series(ħ)` for each ħ.
///
/// `index` is the position of the level in the spectrum (its `α`), and `grid`
/// the number of interior points of the coarse grid; the fine grid has `2·grid + 1`.
pub fn crosscheck_eigenvalue_1d<S: Scalar>(
    p: &JetProblem<S>,
    series: &FormalScalarSeries<S>,
    order: HalfInt,
    index: usize,
    hbars: &[f64],
    grid: usize,
) -> Result<FdReport> {
    let (v, w) = scalar_data(p)?;
    if hbars.len() < 2 {
        return Err(QmfError::Invalid("at least two values of ħ are needed".into()));
    }
    let truncated = series.truncate(order);
    let exact_series = truncated.terms().filter(|(e, c)| *e > HalfInt::ZERO && !c.is_zero()).count() == 0
        && series.prec() >= order;
    let samples: Vec<FdSample> = hbars
        .par_iter()
        .map(|&hbar| {
            let a = half_width(&v, hbar);
            let coarse = fd_eigenvalue(&v, &w, hbar, a, grid, index);
            let fine = fd_eigenvalue(&v, &w, hbar, a, 2 * grid + 1, index);
            let extrapolated = (4.0 * fine - coarse) / 3.0;
            let value = hbar * truncated.eval_f64(hbar);
            let error = (extrapolated - value).abs();
            let discretization = (fine - coarse).abs() / 3.0;
            FdSample {
                hbar,
                half_width: a,
                coarse,
                fine,
                extrapolated,
                series: value,
                error,
                discretization,
                converged: exact_series || discretization < 0.05 * error,
            }
        })
        .collect();
    if let Some(s) = samples.iter().find(|s| !s.converged) {
        return Err(QmfError::Numeric(format!(
            "grid not converged at ħ = {}: discretization {:.3e} vs error {:.3e}",
            s.hbar, s.discretization, s.error
        )));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.hbar.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.error.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let required_slope = order.to_f64() + 1.5;
    let passed = if exact_series {
        samples.iter().all(|s| s.error <= 1e-8 + 10.0 * s.discretization) || slope >= required_slope
    } else {
        slope >= required_slope
    };
    Ok(FdReport {
        samples,
        slope,
        required_slope,
        exact_series,
        passed,
    })
}
