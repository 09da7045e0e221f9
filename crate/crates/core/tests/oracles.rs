//! Independent oracles for individual stages of the construction.

use qmf::diagonalize::{formal_eigendecomposition, SeriesMatrix};
use qmf::hermite::{build_spectrum, HermiteBasis, HermiteCoords, HermiteIndex};
use qmf::linalg::Mat;
use qmf::operator::solve_eikonal;
use qmf::pairing::gaussian_moment;
use qmf::pipeline::{compute_quasimodes, prepare, projector_check, verify_all};
use qmf::presets::{preset, PRESET_NAMES};
use qmf::projection::{projector_terms, resolvent_chain_apply};
use qmf::series::{FormalScalarSeries, HalfInt, MultiIndex, Poly};
use qmf::spec_file::{parse_problem_spec, serialize_problem_spec, spec_from_problem, Mode};
use qmf::{Rational, Scalar};

fn q(a: i64, b: i64) -> Rational {
    Rational::from_ratio(a, b)
}

fn h(doubled: i64) -> HalfInt {
    HalfInt::from_doubled(doubled)
}

fn series(coeffs: &[Rational], prec: i64) -> FormalScalarSeries<Rational> {
    FormalScalarSeries::from_terms(coeffs.iter().enumerate().map(|(i, c)| (h(i as i64), c.clone())), h(prec))
}

#[test]
fn first_reduced_resolvent_term_of_cubic_well() {
    // Q_{1/2} h0 = c·y, and y sits 2 above the ground level, so Π_{1/2} h0 = −(c/2) y.
    for c in [q(1, 1), q(1, 2), q(-3, 1)] {
        let p = preset(&format!("cubic:c={}", c.display())).unwrap();
        let setup = prepare(&p.problem, &p.level, h(2)).unwrap();
        let basis = &setup.basis;
        let h0 = basis.position(&HermiteIndex::new(vec![0], 0)).unwrap();
        let y = basis.position(&HermiteIndex::new(vec![1], 0)).unwrap();
        let terms = projector_terms(&setup.qmatrices, &HermiteCoords::from([(h0, q(1, 1))]), h(2)).unwrap();
        assert_eq!(terms[0], HermiteCoords::from([(h0, q(1, 1))]));
        assert_eq!(terms[1], HermiteCoords::from([(y, -c.clone() / q(2, 1))]));
    }
}

#[test]
fn second_projector_term_matches_kato_formula() {
    // Π_1 h0 = S Q S Q h0 − S Q_1 h0 − ⟨Q S² Q h0⟩_{h0} h0 (Q = Q_{1/2}, S the reduced resolvent,
    // P the coordinate projection on h0; Q is not symmetric in the bare Gaussian pairing)
    let p = preset("cubic:c=1").unwrap();
    let setup = prepare(&p.problem, &p.level, h(2)).unwrap();
    let qm = &setup.qmatrices;
    let basis = &setup.basis;
    let h0 = basis.position(&HermiteIndex::new(vec![0], 0)).unwrap();
    let e0 = q(1, 1);
    let reduced = |x: &HermiteCoords<Rational>| -> HermiteCoords<Rational> {
        x.iter()
            .filter(|(b, _)| **b != h0)
            .map(|(b, c)| (*b, c.clone() / (basis.eigenvalue(*b) - e0.clone())))
            .collect()
    };
    let start = HermiteCoords::from([(h0, q(1, 1))]);
    let sq = reduced(&qm.apply(h(1), &start).unwrap());
    let sqsq = reduced(&qm.apply(h(1), &sq).unwrap());
    let s1 = reduced(&qm.apply(h(2), &start).unwrap());
    let norm = qm.apply(h(1), &reduced(&sq)).unwrap().get(&h0).cloned().unwrap_or(q(0, 1));
    let mut want = HermiteCoords::new();
    for (b, c) in sqsq {
        *want.entry(b).or_insert(q(0, 1)) += c;
    }
    for (b, c) in s1 {
        *want.entry(b).or_insert(q(0, 1)) -= c;
    }
    *want.entry(h0).or_insert(q(0, 1)) -= norm;
    want.retain(|_, c| !c.is_zero());
    let got = projector_terms(qm, &start, h(2)).unwrap();
    assert_eq!(got[2], want);
}

#[test]
fn chain_sum_equals_residue_recursion() {
    for name in ["cubic", "quartic", "bundle2"] {
        let p = preset(name).unwrap();
        let setup = prepare(&p.problem, &p.level, h(4)).unwrap();
        let qm = &setup.qmatrices;
        for idx in setup.level.members.iter().chain([&HermiteIndex::new(vec![1], 0)]) {
            let b = setup.basis.position(idx).unwrap();
            let terms = projector_terms(qm, &HermiteCoords::from([(b, q(1, 1))]), h(4)).unwrap();
            for jd in 0..=4 {
                assert_eq!(resolvent_chain_apply(qm, h(jd), idx).unwrap(), terms[jd as usize], "{name} {idx:?} j = {jd}/2");
            }
        }
    }
}

#[test]
fn inverse_square_root_is_binomial_series() {
    // (1 + 2ħ)^{-1/2} = 1 − ħ + 3/2 ħ² − 5/2 ħ³ + 35/8 ħ⁴
    let a = SeriesMatrix::from_terms(
        vec![Mat::identity(2), Mat::zeros(2, 2), Mat::diag(&[q(2, 1), q(0, 1)])],
        h(8),
    );
    let x = a.inverse_sqrt().unwrap();
    assert_eq!(x.entry(0, 0), series(&[q(1, 1), q(0, 1), q(-1, 1), q(0, 1), q(3, 2), q(0, 1), q(-5, 2), q(0, 1), q(35, 8)], 8));
    assert_eq!(x.entry(1, 1), series(&[q(1, 1)], 8));
    assert!(x.entry(0, 1).is_zero());
}

#[test]
fn eikonal_phase_of_cubic_well() {
    // φ' = x√(1 + x) = x + x²/2 − x³/8 + x⁴/16 − 5x⁵/128
    let p = preset("cubic").unwrap();
    let phi = solve_eikonal(&p.problem, 6).unwrap();
    let want = [q(0, 1), q(0, 1), q(1, 2), q(1, 6), q(-1, 32), q(1, 80), q(-5, 768)];
    for (d, c) in want.iter().enumerate() {
        assert_eq!(phi.coeff(&MultiIndex::new(vec![d as u32])), *c, "degree {d}");
    }
}

#[test]
fn hermite_polynomials_solve_the_oscillator_equation() {
    // −p'' + 2λ y p' = 2mλ p for the monic basis polynomial of degree m
    for lambda in [q(1, 1), q(2, 1), q(3, 2)] {
        let basis = HermiteBasis::new(std::slice::from_ref(&lambda), &[q(0, 1)], 8);
        let y = Poly::var(1, 0);
        for m in 0..=8u32 {
            let p = basis.poly(&HermiteIndex::new(vec![m], 0));
            assert_eq!(p.coeff(&MultiIndex::new(vec![m])), q(1, 1));
            let lhs = &(&y * &p.derivative(0)).scale(&(q(2, 1) * lambda.clone())) - &p.derivative(0).derivative(0);
            assert_eq!(lhs, p.scale(&(q(2 * m as i64, 1) * lambda.clone())), "λ = {lambda}, m = {m}");
        }
    }
}

#[test]
fn gaussian_moments_match_quadrature() {
    for lambda in [0.5f64, 1.0, 2.5] {
        for a in 0..=10u32 {
            let steps = 40_000;
            let (lo, hi) = (-14.0, 14.0);
            let dx = (hi - lo) / steps as f64;
            let integral: f64 = (0..=steps)
                .map(|i| {
                    let x = lo + dx * i as f64;
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    w * x.powi(a as i32) * (-lambda * x * x).exp()
                })
                .sum::<f64>()
                * dx
                / (std::f64::consts::PI / lambda).sqrt();
            let got = gaussian_moment(&MultiIndex::new(vec![a]), &[lambda]);
            assert!((got - integral).abs() <= 1e-10 * integral.abs().max(1.0), "λ = {lambda}, a = {a}: {got} vs {integral}");
        }
    }
}

fn det3(m: &[[FormalScalarSeries<Rational>; 3]; 3]) -> FormalScalarSeries<Rational> {
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| &(&m[r1][c1] * &m[r2][c2]) - &(&m[r1][c2] * &m[r2][c1]);
    let t0 = &m[0][0] * &minor(1, 2, 1, 2);
    let t1 = &m[0][1] * &minor(1, 2, 0, 2);
    let t2 = &m[0][2] * &minor(1, 2, 0, 1);
    &(&t0 - &t1) + &t2
}

#[test]
fn two_by_two_splitting_in_closed_form() {
    // 2 + ħ [[0, 1], [1, 0]] has eigenvalues 2 ± ħ and eigenvectors (1, ±1)/√2
    let mut off = Mat::zeros(2, 2);
    off.set(0, 1, q(1, 1));
    off.set(1, 0, q(1, 1));
    let m = SeriesMatrix::from_terms(vec![Mat::scalar(2, q(2, 1)), Mat::zeros(2, 2), off], h(8));
    let r = formal_eigendecomposition(&m, &[q(1, 1), q(1, 1)]).unwrap();
    let mut values: Vec<Rational> = r.values.iter().map(|v| v.coeff(h(2))).collect();
    values.sort();
    assert_eq!(values, vec![q(-1, 1), q(1, 1)]);
    for v in &r.values {
        assert_eq!(v.coeff(HalfInt::ZERO), q(2, 1));
        assert!(v.terms().all(|(e, c)| e == HalfInt::ZERO || e == h(2) || c.is_zero()));
    }
    assert_eq!(r.split_orders, vec![h(2)]);
    for (j, c) in r.norms.iter().enumerate() {
        let v0 = r.vectors.coeff(0).column(j);
        assert_eq!(v0[0].clone() * v0[0].clone() + v0[1].clone() * v0[1].clone(), c.clone());
        assert_eq!(v0[0].clone() * v0[0].clone(), v0[1].clone() * v0[1].clone());
    }
}

#[test]
fn two_stage_splitting_solves_characteristic_polynomial() {
    // ħ diag(0, 0, 1) + ħ² C: the first order separates {1, 2} from 3, the second splits {1, 2}
    let c = [[0, 1, 1], [1, 0, 0], [1, 0, 2]];
    let mut first = Mat::zeros(3, 3);
    first.set(2, 2, q(1, 1));
    let second = Mat::from_fn(3, 3, |i, j| q(c[i][j], 1));
    let m = SeriesMatrix::from_terms(vec![Mat::zeros(3, 3), Mat::zeros(3, 3), first, Mat::zeros(3, 3), second], h(10));
    let r = formal_eigendecomposition(&m, &[q(1, 1), q(1, 1), q(1, 1)]).unwrap();
    assert_eq!(r.values.len(), 3);
    let mut leading: Vec<(Rational, Rational)> = r.values.iter().map(|v| (v.coeff(h(2)), v.coeff(h(4)))).collect();
    leading.sort();
    assert_eq!(leading[0], (q(0, 1), q(-1, 1)));
    assert_eq!(leading[1], (q(0, 1), q(1, 1)));
    assert_eq!(leading[2].0, q(1, 1));
    for e in &r.values {
        let prec = e.prec();
        let entry = |i: usize, j: usize| {
            let s = m.entry(i, j).truncate(prec);
            if i == j {
                &s - e
            } else {
                s
            }
        };
        let d = det3(&[
            [entry(0, 0), entry(0, 1), entry(0, 2)],
            [entry(1, 0), entry(1, 1), entry(1, 2)],
            [entry(2, 0), entry(2, 1), entry(2, 2)],
        ]);
        // each eigenvalue is O(ħ), so the determinant is known through ħ^{prec + 2}
        assert!(d.truncate(prec + h(4)).is_zero(), "det(M − E) = {d}");
    }
}

#[test]
fn harmonic_table_lists_every_index() {
    let t = build_spectrum(&[q(1, 1), q(3, 2)], &[q(0, 1), q(1, 3)], 3);
    assert_eq!(t.entries.len(), 10 * 2);
    let levels = t.distinct_levels(0.0);
    assert!(levels.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(levels[0], q(5, 2));
}

#[test]
fn problem_files_round_trip_for_presets() {
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        let spec = spec_from_problem(p.problem.clone(), Some(p.level.clone()), h(6), Mode::Exact);
        let text = serialize_problem_spec(&spec).unwrap();
        let back = parse_problem_spec(&text).unwrap();
        assert_eq!(back, spec, "{name}:\n{text}");
    }
}

#[test]
fn float_mode_matches_exact_mode_on_the_bundle() {
    let p = preset("bundle2").unwrap();
    let exact = compute_quasimodes(&p.problem, &p.level, h(6)).unwrap();
    let pf = p.problem.to_float();
    let float = compute_quasimodes(&pf, &qmf::hermite::LevelSelector::Value(6.0), h(6)).unwrap();
    let mut want: Vec<Vec<f64>> = exact
        .result
        .eigenvalues
        .iter()
        .map(|e| HalfInt::range_inclusive(HalfInt::ZERO, h(6)).map(|t| e.coeff(t).to_f64()).collect())
        .collect();
    let mut got: Vec<Vec<f64>> = float
        .result
        .eigenvalues
        .iter()
        .map(|e| HalfInt::range_inclusive(HalfInt::ZERO, h(6)).map(|t| e.coeff(t)).collect())
        .collect();
    want.sort_by(|a, b| a[1].total_cmp(&b[1]));
    got.sort_by(|a, b| a[1].total_cmp(&b[1]));
    for (w, g) in want.iter().zip(&got) {
        for (a, b) in w.iter().zip(g) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
    let report = verify_all(&float, 1e-9, true).unwrap();
    assert!(report.passed(), "{report:?}");
    let (_, pr) = projector_check(&float, 1e-9).unwrap();
    assert!(pr.max_defect() <= 1e-9);
}
