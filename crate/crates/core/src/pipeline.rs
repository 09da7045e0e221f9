//! End-to-end construction of the quasimodes of a level and the checks run on them.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::diagonalize::{
    cross_matrix, effective_matrix, eigen_defect, formal_eigendecomposition, gram_matrix, half_integer_defect, EffectiveMatrix,
    EigenResult,
};
use crate::error::{QmfError, Result};
use crate::hermite::{
    coords_axpy, select_level, DegenerateLevel, HermiteBasis, HermiteCoords, LevelSelector, DEFAULT_CLUSTER_TOL,
};
use crate::linalg::Mat;
use crate::operator::{conjugate_hamiltonian, rescale_operator, solve_eikonal, ConjugatedOperator, JetProblem, RescaledFamily, ScalarJet};
use crate::pairing::{weight_expansion, GammaJet, Pairing};
use crate::projection::{build_projector, projector_diagnostics, series_max_abs, series_sub, CoordSeries, Projector, ProjectorReport, QMatrices};
use crate::scalar::Scalar;
use crate::series::{unrescale, FiberPoly, FormalScalarSeries, HalfInt, Poly, S0Series, XJetSeries};

/// Upper bound on internal order extensions when eigenvectors lose precision.
const MAX_EXTENSIONS: usize = 4;

/// The operator-side objects shared by every stage for one internal order.
#[derive(Debug)]
pub struct Setup<S> {
    pub problem: JetProblem<S>,
    /// Orthogonal frame change applied to the fiber (identity unless `W(p)` was rotated).
    pub frame: Mat<S>,
    pub phi: ScalarJet<S>,
    pub operator: ConjugatedOperator<S>,
    pub family: RescaledFamily<S>,
    pub level: DegenerateLevel<S>,
    pub basis: Arc<HermiteBasis<S>>,
    pub qmatrices: Arc<QMatrices<S>>,
    pub pairing: Pairing<S>,
    pub order: HalfInt,
}

/// Brings `W(p)` to diagonal form; float mode rotates the frame, exact mode requires it.
pub fn diagonal_frame<S: Scalar>(p: &JetProblem<S>) -> Result<(JetProblem<S>, Mat<S>, Vec<S>)> {
    let w0 = p.endomorphism.at_origin();
    if w0.is_diagonal() {
        return Ok((p.clone(), Mat::identity(p.rank), w0.diagonal()));
    }
    if S::EXACT {
        return Err(p.fiber_spectrum().unwrap_err());
    }
    let r = p.rank;
    let eig = SymmetricEigen::new(DMatrix::from_fn(r, r, |i, j| w0[(i, j)].to_f64()));
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let o = Mat::from_fn(r, r, |i, j| S::from_f64(eig.eigenvectors[(i, order[j])]));
    let rotated = p.rotate_fiber(&o);
    let mu = rotated.endomorphism.at_origin().diagonal();
    Ok((rotated, o, mu))
}

/// Resolves the level of `Q₀` picked by `selector`.
pub fn resolve_level<S: Scalar>(p: &JetProblem<S>, selector: &LevelSelector<S>) -> Result<DegenerateLevel<S>> {
    p.validate()?;
    let (_, _, mu) = diagonal_frame(p)?;
    select_level(&p.lambda, &mu, selector, DEFAULT_CLUSTER_TOL)
}

/// Graded family `Q_0 … Q_order` of a validated problem.
pub fn build_family<S: Scalar>(p: &JetProblem<S>, order: HalfInt) -> Result<(ScalarJet<S>, ConjugatedOperator<S>, RescaledFamily<S>)> {
    let x_degree = order.doubled.max(0) as usize;
    let phi = solve_eikonal(p, x_degree + 2)?;
    let ops = conjugate_hamiltonian(p, &phi, x_degree)?;
    let family = rescale_operator(&ops, order)?;
    Ok((phi, ops, family))
}

/// Builds everything needed to work with the level through internal order `order`.
pub fn prepare<S: Scalar>(problem: &JetProblem<S>, selector: &LevelSelector<S>, order: HalfInt) -> Result<Setup<S>> {
    problem.validate()?;
    let (p, frame, mu) = diagonal_frame(problem)?;
    if let Some(g) = &p.fiber_metric {
        if !(&g.at_origin() - &Mat::identity(p.rank)).is_zero() {
            return Err(QmfError::Invalid("fiber metric must be the identity at the minimum".into()));
        }
    }
    let level = select_level(&p.lambda, &mu, selector, DEFAULT_CLUSTER_TOL)?;
    let (phi, operator, family) = build_family(&p, order)?;
    let degree = level.k.doubled as usize + order.doubled.max(0) as usize + 2;
    let basis = Arc::new(HermiteBasis::new(&p.lambda, &mu, degree));
    let qmatrices = Arc::new(QMatrices::new(basis.clone(), &family, level.e0.clone())?);
    let omega = weight_expansion(&phi, &p.metric_inverse, order)?;
    let gamma = match &p.fiber_metric {
        Some(g) => GammaJet::from_jets(g),
        None => GammaJet::identity(p.n, p.rank),
    };
    let pairing = Pairing::new(&p.lambda, p.rank, &omega, &gamma);
    Ok(Setup {
        problem: p,
        frame,
        phi,
        operator,
        family,
        level,
        basis,
        qmatrices,
        pairing,
        order,
    })
}

/// Embeds a coordinate series in the rescaled space with offset `k`.
pub fn coords_to_s0_offset<S: Scalar>(basis: &HermiteBasis<S>, u: &CoordSeries<S>, prec: HalfInt, k: HalfInt) -> Result<S0Series<S>> {
    S0Series::from_terms(
        basis.nvars(),
        basis.rank(),
        k,
        prec + k,
        u.range(..=prec).map(|(e, x)| (*e + k, basis.synthesize(x))),
    )
}

/// Output of the construction for one level.
#[derive(Debug, Clone)]
pub struct QuasimodeResult<S> {
    pub level: DegenerateLevel<S>,
    pub order: HalfInt,
    /// Internal order reached after extensions.
    pub internal_order: HalfInt,
    pub mode: &'static str,
    /// Eigenvalues of `Q`; the energies are `ħ` times these.
    pub eigenvalues: Vec<FormalScalarSeries<S>>,
    /// Rescaled eigenfunctions in Hermite coordinates, exponent by exponent.
    pub coords: Vec<CoordSeries<S>>,
    /// Rescaled eigenfunctions with offset `K`.
    pub psi: Vec<S0Series<S>>,
    /// Un-rescaled jets: `a_j = ħ^{−K} Σ_k ħ^k a_{j,k}`, in the original fiber frame.
    pub amplitudes: Vec<XJetSeries<S>>,
    /// Constant `(ψ_j, ψ_j)`; equal to 1 whenever the series were normalized.
    pub norms: Vec<S>,
    pub normalized: Vec<bool>,
    pub split_orders: Vec<HalfInt>,
}

/// Eigenvalue series and eigenfunctions of the level through order `N`, after
/// one construction at internal order `internal`.
fn construct<S: Scalar>(setup: &Setup<S>, order: HalfInt) -> Result<(QuasimodeResult<S>, EffectiveMatrix<S>, EigenResult<S>)> {
    let level = &setup.level;
    let k = level.k;
    let np = setup.order;
    let projector = build_projector(setup.qmatrices.clone(), level, np)?;
    let basis = &setup.basis;
    let images: Vec<CoordSeries<S>> = level.members.iter().map(|h| projector.image(h)).collect::<Result<_>>()?;
    let q_images: Vec<CoordSeries<S>> = images
        .iter()
        .map(|f| setup.qmatrices.apply_series(f, np))
        .collect::<Result<_>>()?;
    let f: Vec<S0Series<S>> = images.iter().map(|u| coords_to_s0_offset(basis, u, np, k)).collect::<Result<_>>()?;
    let qf: Vec<S0Series<S>> = q_images.iter().map(|u| coords_to_s0_offset(basis, u, np, k)).collect::<Result<_>>()?;
    let d0: Vec<S> = projector.member_positions().iter().map(|&b| basis.norm2(b)).collect();
    let gram = gram_matrix(&f, &setup.pairing)?.truncate(np);
    let cross = cross_matrix(&f, &qf, &setup.pairing)?.truncate(np);
    let eff = effective_matrix(gram, cross, d0)?;
    let eig = formal_eigendecomposition(&eff.matrix, &eff.metric)?;
    let w = eff.transform.mul(&eig.vectors);
    let prec = w.prec().min(order);

    let m0 = level.m0;
    let mut coords = Vec::with_capacity(m0);
    let mut norms = Vec::with_capacity(m0);
    let mut normalized = Vec::with_capacity(m0);
    for j in 0..m0 {
        let c = eig.norms[j].clone();
        let scale = c.sqrt().map(|s| s.inv());
        let mut psi = CoordSeries::new();
        for (kk, img) in images.iter().enumerate() {
            for (t, m) in w.terms().iter().enumerate() {
                let wt = m[(kk, j)].clone();
                if wt.is_zero() {
                    continue;
                }
                let wt = match &scale {
                    Some(s) => wt * s.clone(),
                    None => wt,
                };
                for (e, x) in img {
                    let ee = *e + HalfInt::from_doubled(t as i64);
                    if ee <= prec {
                        coords_axpy(psi.entry(ee).or_default(), &wt, x);
                    }
                }
            }
        }
        psi.retain(|_, x: &mut HermiteCoords<S>| !x.is_empty());
        coords.push(psi);
        normalized.push(scale.is_some());
        norms.push(if scale.is_some() { S::one() } else { c });
    }
    let psi: Vec<S0Series<S>> = coords.iter().map(|u| coords_to_s0_offset(basis, u, prec, k)).collect::<Result<_>>()?;
    let amplitudes = psi
        .iter()
        .map(|s| unrescale(s).map(|a| rotate_jets(&a, &setup.frame)))
        .collect::<Result<_>>()?;
    let eigenvalues = eig.values.iter().map(|v| v.truncate(order.min(v.prec()))).collect();
    Ok((
        QuasimodeResult {
            level: level.clone(),
            order,
            internal_order: np,
            mode: S::NAME,
            eigenvalues,
            coords,
            psi,
            amplitudes,
            norms,
            normalized,
            split_orders: eig.split_orders.clone(),
        },
        eff,
        eig,
    ))
}

fn rotate_jets<S: Scalar>(a: &XJetSeries<S>, frame: &Mat<S>) -> XJetSeries<S> {
    if (frame - &Mat::identity(frame.rows())).is_zero() {
        return a.clone();
    }
    let mut out = XJetSeries::new(a.nvars(), a.rank(), a.offset(), a.x_degree(), a.order());
    for (k, p) in a.coeffs() {
        let comps = (0..a.rank())
            .map(|r| {
                (0..a.rank()).fold(Poly::zero(a.nvars()), |acc, c| {
                    &acc + &p.component(c).scale(&frame[(r, c)])
                })
            })
            .collect();
        out.add_at(*k, &FiberPoly::from_components(a.nvars(), comps));
    }
    out
}

/// Constructed quasimodes together with the setup used at the final internal order.
#[derive(Debug)]
pub struct Quasimodes<S> {
    pub setup: Setup<S>,
    pub result: QuasimodeResult<S>,
    pub effective: EffectiveMatrix<S>,
    pub eigen: EigenResult<S>,
}

/// Runs the full construction through order `N`, raising the internal order
/// when eigenvector splitting costs precision.
pub fn compute_quasimodes<S: Scalar>(p: &JetProblem<S>, selector: &LevelSelector<S>, order: HalfInt) -> Result<Quasimodes<S>> {
    if order < HalfInt::ZERO {
        return Err(QmfError::Invalid("order must be nonnegative".into()));
    }
    let mut internal = order;
    for _ in 0..=MAX_EXTENSIONS {
        let setup = prepare(p, selector, internal)?;
        let (result, effective, eigen) = construct(&setup, order)?;
        let reached = eigen.vectors.prec();
        if reached >= order {
            return Ok(Quasimodes {
                setup,
                result,
                effective,
                eigen,
            });
        }
        internal += order - reached;
    }
    Err(QmfError::Truncation {
        required: (order.doubled as usize) * 2,
        available: (internal.doubled as usize) * 2,
    })
}

/// One verification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub order: HalfInt,
    pub max_residual: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn push(&mut self, c: CheckOutcome) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn extend(&mut self, o: VerificationReport) {
        self.checks.extend(o.checks);
    }
}

fn tolerance<S: Scalar>(tol: f64) -> f64 {
    if S::EXACT {
        0.0
    } else {
        tol
    }
}

fn outcome<S: Scalar>(name: &str, order: HalfInt, residual: f64, tol: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        order,
        max_residual: residual,
        passed: residual <= tolerance::<S>(tol),
        detail,
    }
}

/// `(A − E₀)a_k + L a_{k−1} − Σ_{i≥1/2} E_i a_{k−i}` through the known degree of `a_k`.
pub fn transport_residual<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> Result<CheckOutcome> {
    let res = &q.result;
    let e0 = res.level.e0.clone();
    let ops = &q.setup.operator;
    let mut worst: f64 = 0.0;
    for (a_rot, e) in res.psi.iter().zip(&res.eigenvalues) {
        // the operator lives in the diagonal frame, so check there
        let a = unrescale(a_rot)?;
        let scale_ops = |k: HalfInt| a.coeff(k);
        for k in HalfInt::range_inclusive(HalfInt::ZERO, a.order()) {
            let deg = a.known_degree(k);
            let ak = scale_ops(k);
            let mut lhs = ops.transport.apply_trunc(&ak, deg)?;
            lhs = &lhs - &ak.scale(&e0);
            let prev = scale_ops(k - HalfInt::ONE);
            lhs = &lhs + &ops.laplace.apply_trunc(&prev, deg)?;
            for (i, c) in e.terms() {
                if i <= HalfInt::ZERO || i > k {
                    continue;
                }
                lhs = &lhs - &scale_ops(k - i).truncate(deg).scale(c);
            }
            worst = worst.max(lhs.truncate(deg).max_abs());
        }
    }
    Ok(outcome::<S>("transport", res.order, worst, tol, "x-jet residual of the transport recursion".into()))
}

/// `(Q − E)ψ` coefficientwise in Hermite coordinates.
pub fn eigen_residual<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> Result<CheckOutcome> {
    let res = &q.result;
    let order = res.order;
    let mut worst: f64 = 0.0;
    for (psi, e) in res.coords.iter().zip(&res.eigenvalues) {
        let qpsi = q.setup.qmatrices.apply_series(psi, order)?;
        let mut epsi = CoordSeries::new();
        for (i, c) in e.terms() {
            for (ee, x) in psi {
                if i + *ee <= order {
                    coords_axpy(epsi.entry(i + *ee).or_default(), c, x);
                }
            }
        }
        worst = worst.max(series_max_abs(&series_sub(&qpsi, &epsi), order));
    }
    Ok(outcome::<S>("eigen", order, worst, tol, "rescaled eigenvalue equation".into()))
}

/// `(ψ_i, ψ_j) − δ_ij c_j` through order `N`.
pub fn orthonormality<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> Result<CheckOutcome> {
    let res = &q.result;
    let m0 = res.psi.len();
    let mut worst: f64 = 0.0;
    let mut reached = res.order;
    for i in 0..m0 {
        for j in 0..m0 {
            let s = q.setup.pairing.pair(&res.psi[i], &res.psi[j])?;
            reached = reached.min(s.prec());
            let target = if i == j { res.norms[j].clone() } else { S::zero() };
            let diff = &s - &FormalScalarSeries::constant(target, s.prec());
            worst = worst.max(diff.truncate(res.order.min(s.prec())).max_abs());
        }
    }
    let normalized = res.normalized.iter().all(|b| *b);
    let detail = if normalized {
        "pairings equal the identity".to_string()
    } else {
        "pairings equal diag(c_j) with constant c_j; normalized series are ψ_j/√c_j".to_string()
    };
    let mut out = outcome::<S>("orthonormality", reached, worst, tol, detail);
    out.passed &= reached >= res.order;
    Ok(out)
}

/// Half-integer eigenvalue coefficients and the parity pattern of the eigenfunctions.
pub fn parity_check<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> CheckOutcome {
    let res = &q.result;
    let uniform = res.level.parity.is_uniform();
    if !uniform {
        return CheckOutcome {
            name: "parity".into(),
            order: res.order,
            max_residual: 0.0,
            passed: true,
            detail: "mixed-parity level, exempt".into(),
        };
    }
    let mut worst = half_integer_defect(&res.eigenvalues);
    for psi in &res.coords {
        for (e, x) in psi {
            for (b, c) in x {
                let deg = q.setup.basis.index(*b).degree() as i64;
                let expected = (res.level.k.doubled + e.doubled) % 2;
                if (deg - expected).rem_euclid(2) != 0 {
                    worst = worst.max(c.abs_f64());
                }
            }
        }
    }
    for a in &res.amplitudes {
        for (k, p) in a.coeffs() {
            if !k.is_integer() && !p.is_zero() {
                worst = worst.max(p.max_abs());
            }
        }
    }
    outcome::<S>(
        "parity",
        res.order,
        worst,
        tol,
        format!("{} level: half-integer eigenvalue terms and wrong-parity eigenfunction terms", res.level.parity.name()),
    )
}

/// `K = max|α|/2` and `deg_min a_{j,k} ≥ max{2(K−k), 0}`.
pub fn bookkeeping_check<S: Scalar>(q: &Quasimodes<S>) -> CheckOutcome {
    let res = &q.result;
    let kmax = res.level.members.iter().map(|h| h.degree()).max().unwrap_or(0);
    let mut ok = HalfInt::from_doubled(kmax as i64) == res.level.k;
    let mut violations = 0usize;
    for a in &res.amplitudes {
        ok &= a.offset() == res.level.k;
        for (k, p) in a.coeffs() {
            let bound = (res.level.k - *k).doubled.max(0) as usize;
            if let Some(d) = p.min_degree() {
                if d < bound {
                    violations += 1;
                }
            }
        }
    }
    ok &= violations == 0;
    CheckOutcome {
        name: "bookkeeping".into(),
        order: res.order,
        max_residual: violations as f64,
        passed: ok,
        detail: format!("K = {}, lowest-degree violations: {violations}", res.level.k),
    }
}

/// `M` symmetric, `MU = D₀UΛ` through the vector precision, and the Gram leading term.
pub fn diagonalization_check<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> CheckOutcome {
    let defect = eigen_defect(&q.effective.matrix, &q.effective.metric, &q.eigen);
    let sym = (&q.effective.matrix.coeff(0) - &q.effective.matrix.coeff(0).transpose()).max_abs();
    outcome::<S>(
        "diagonalization",
        q.eigen.vectors.prec(),
        defect.max(sym),
        tol,
        "effective matrix eigen-equation".into(),
    )
}

/// Projector laws on the final setup.
pub fn projector_check<S: Scalar>(q: &Quasimodes<S>, tol: f64) -> Result<(CheckOutcome, ProjectorReport)> {
    let setup = &q.setup;
    let order = q.result.order;
    let projector = build_projector(setup.qmatrices.clone(), &setup.level, order)?;
    let report = projector_check_report(&projector, &setup.pairing, setup.level.k)?;
    let scale = if S::EXACT { 1.0 } else { q.result.eigenvalues.iter().map(|e| e.max_abs()).fold(1.0, f64::max) };
    let mut out = outcome::<S>("projector", order, report.max_defect(), tol * scale, format!("rank {} of {}", report.rank, setup.level.m0));
    out.passed &= report.leading_identity && report.rank == setup.level.m0;
    Ok((out, report))
}

fn projector_check_report<S: Scalar>(projector: &Projector<S>, pairing: &Pairing<S>, k: HalfInt) -> Result<ProjectorReport> {
    projector_diagnostics(projector, pairing, k.doubled as usize + 2)
}

/// Rayleigh–Schrödinger series for a nondegenerate level, independent of the
/// projector and the pairing.
pub fn rs_oracle<S: Scalar>(p: &JetProblem<S>, selector: &LevelSelector<S>, order: HalfInt) -> Result<FormalScalarSeries<S>> {
    p.validate()?;
    let (p, _, mu) = diagonal_frame(p)?;
    let level = select_level(&p.lambda, &mu, selector, DEFAULT_CLUSTER_TOL)?;
    if level.m0 != 1 {
        return Err(QmfError::Degenerate(format!("level has multiplicity {}", level.m0)));
    }
    let (_, _, family) = build_family(&p, order)?;
    let degree = level.k.doubled as usize + order.doubled.max(0) as usize;
    let basis = Arc::new(HermiteBasis::new(&p.lambda, &mu, degree));
    let qm = QMatrices::new(basis.clone(), &family, level.e0.clone())?;
    let h0 = basis.position(&level.members[0]).expect("level member in basis");
    let orders = qm.perturbation_orders();
    let mut psi: Vec<HermiteCoords<S>> = vec![HermiteCoords::from([(h0, S::one())])];
    let mut e: Vec<S> = vec![level.e0.clone()];
    for nd in 1..=order.doubled {
        let n = HalfInt::from_doubled(nd);
        let mut rhs = HermiteCoords::new();
        for i in &orders {
            if *i > n {
                break;
            }
            let y = qm.apply(*i, &psi[(n - *i).doubled as usize])?;
            coords_axpy(&mut rhs, &S::one(), &y);
        }
        let en = rhs.get(&h0).cloned().unwrap_or_else(S::zero);
        // E_n ψ_0 only touches the h0 coordinate, which stays zero for n > 0
        let mut acc = HermiteCoords::new();
        for id in 1..nd {
            coords_axpy(&mut acc, &e[id as usize], &psi[(nd - id) as usize]);
        }
        coords_axpy(&mut acc, &-S::one(), &rhs);
        e.push(en);
        let mut next = HermiteCoords::new();
        for (b, c) in acc {
            if b == h0 {
                continue;
            }
            let delta = basis.eigenvalue(b) - level.e0.clone();
            next.insert(b, c / delta);
        }
        psi.push(next);
    }
    Ok(FormalScalarSeries::from_terms(
        e.into_iter().enumerate().map(|(i, c)| (HalfInt::from_doubled(i as i64), c)),
        order,
    ))
}

/// All jet-level checks on a computed level.
pub fn verify_all<S: Scalar>(q: &Quasimodes<S>, tol: f64, with_projector: bool) -> Result<VerificationReport> {
    let mut report = VerificationReport::default();
    report.push(transport_residual(q, tol)?);
    report.push(eigen_residual(q, tol)?);
    report.push(orthonormality(q, tol)?);
    report.push(parity_check(q, tol));
    report.push(bookkeeping_check(q));
    report.push(diagonalization_check(q, tol));
    if with_projector {
        report.push(projector_check(q, tol)?.0);
    }
    Ok(report)
}

/// Coefficient table of a level's eigenvalues, keyed by exponent.
pub fn eigenvalue_table<S: Scalar>(res: &QuasimodeResult<S>) -> Vec<BTreeMap<HalfInt, S>> {
    res.eigenvalues
        .iter()
        .map(|s| s.terms().map(|(e, c)| (e, c.clone())).collect())
        .collect()
}
