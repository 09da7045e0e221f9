use proptest::prelude::*;

use qmf::diagonalize::SeriesMatrix;
use qmf::hermite::{build_spectrum, harmonic_eigenvalue, LevelSelector};
use qmf::linalg::Mat;
use qmf::operator::JetProblem;
use qmf::pipeline::{compute_quasimodes, projector_check, transport_residual};
use qmf::presets::preset;
use qmf::series::{FormalScalarSeries, HalfInt, MatPoly, MultiIndex, Poly};
use qmf::spec_file::{parse_problem_spec, serialize_problem_spec, spec_from_problem, Mode};
use qmf::{Rational, Scalar};

fn rational(lo: i64, hi: i64) -> impl Strategy<Value = Rational> {
    (lo..=hi, 1i64..=4).prop_map(|(p, q)| Rational::from_ratio(p, q))
}

fn formal(len: usize) -> impl Strategy<Value = FormalScalarSeries<Rational>> {
    (0i64..3, prop::collection::vec(rational(-4, 4), len)).prop_map(move |(off, cs)| {
        let prec = HalfInt::from_doubled(len as i64 + off);
        FormalScalarSeries::from_terms(
            cs.into_iter().enumerate().map(|(i, c)| (HalfInt::from_doubled(i as i64 + off), c)),
            prec,
        )
    })
}

fn poly1(max_deg: usize) -> impl Strategy<Value = Poly<Rational>> {
    prop::collection::vec(rational(-3, 3), max_deg + 1).prop_map(|cs| {
        Poly::from_terms(1, cs.into_iter().enumerate().map(|(d, c)| (MultiIndex::new(vec![d as u32]), c)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_product_is_commutative_and_associative(a in formal(6), b in formal(6), c in formal(6)) {
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&(&a + &b) * &c, &(&a * &c) + &(&b * &c));
    }

    #[test]
    fn unit_inverse_and_square_root(tail in prop::collection::vec(rational(-3, 3), 6)) {
        let mut cs = vec![Rational::from_i64(1)];
        cs.extend(tail);
        let prec = HalfInt::from_doubled(cs.len() as i64);
        let u = FormalScalarSeries::from_terms(cs.into_iter().enumerate().map(|(i, c)| (HalfInt::from_doubled(i as i64), c)), prec);
        let one = FormalScalarSeries::constant(Rational::from_i64(1), prec);
        prop_assert_eq!(&u * &u.inverse_unit().unwrap(), one.clone());
        let r = u.inverse_sqrt_series().unwrap();
        prop_assert_eq!(&(&r * &r) * &u, one);
    }

    #[test]
    fn half_integers_parse_and_add(a in -40i64..40, b in -40i64..40) {
        let x = HalfInt::from_doubled(a);
        let y = HalfInt::from_doubled(b);
        prop_assert_eq!((x + y).doubled, a + b);
        prop_assert_eq!((x - y) + y, x);
        prop_assert_eq!(x.to_string().parse::<HalfInt>().unwrap(), x);
    }

    #[test]
    fn polynomial_product_rule(p in poly1(4), q in poly1(4)) {
        let lhs = (&p * &q).derivative(0);
        let rhs = &(&p.derivative(0) * &q) + &(&p * &q.derivative(0));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn harmonic_spectrum_formula(
        lambda in prop::collection::vec(rational(1, 6), 1..=3),
        mu in prop::collection::vec(rational(-4, 4), 1..=2),
        degree in 0usize..4,
    ) {
        let t = build_spectrum(&lambda, &mu, degree);
        let count = match lambda.len() { 1 => degree + 1, 2 => (degree + 1) * (degree + 2) / 2, _ => (degree + 1) * (degree + 2) * (degree + 3) / 6 };
        prop_assert_eq!(t.entries.len(), count * mu.len());
        for (idx, e) in &t.entries {
            let mut want = mu[idx.k].clone();
            for (l, a) in lambda.iter().zip(idx.alpha.entries()) {
                want += l.clone() * Rational::from_i64(2 * *a as i64 + 1);
            }
            prop_assert_eq!(e, &want);
            prop_assert_eq!(harmonic_eigenvalue(&lambda, &mu, idx), want);
        }
    }

    #[test]
    fn inverse_square_root_of_positive_series(entries in prop::collection::vec(rational(-2, 2), 12)) {
        let sym = |k: usize| {
            let mut m = Mat::zeros(2, 2);
            m.set(0, 0, entries[3 * k].clone());
            m.set(1, 1, entries[3 * k + 1].clone());
            m.set(0, 1, entries[3 * k + 2].clone());
            m.set(1, 0, entries[3 * k + 2].clone());
            m
        };
        let prec = HalfInt::from_doubled(4);
        let a = SeriesMatrix::from_terms(vec![Mat::identity(2), sym(0), sym(1), sym(2), sym(3)], prec);
        let b = a.inverse_sqrt().unwrap();
        prop_assert!(b.mul(&a).mul(&b).sub(&SeriesMatrix::identity(2, prec)).max_abs() == 0.0);
        prop_assert!(b.is_symmetric());
    }

    #[test]
    fn problem_files_round_trip(
        lambda in prop::collection::vec(rational(1, 5), 1..=2),
        cubic in rational(-3, 3),
        quartic in rational(0, 3),
        mu in prop::collection::vec(rational(-2, 2), 1..=2),
        order in 0i64..8,
        float in any::<bool>(),
    ) {
        let mut p = JetProblem::harmonic(lambda.clone(), mu.clone());
        let n = lambda.len();
        p.potential.add_term(MultiIndex::new(vec![3].into_iter().chain(std::iter::repeat_n(0, n - 1)).collect()), cubic);
        p.potential.add_term(MultiIndex::new(vec![0; n - 1].into_iter().chain([4]).collect()), quartic);
        let mode = if float { Mode::Float } else { Mode::Exact };
        let level = Some(LevelSelector::Index(1));
        let spec = spec_from_problem(p, level, HalfInt::from_doubled(order), mode);
        let text = serialize_problem_spec(&spec).unwrap();
        prop_assert_eq!(parse_problem_spec(&text).unwrap(), spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bundle_projector_laws_in_float_mode(w in -20i64..20, a in -20i64..20) {
        let name = format!("bundle2:w={}/10,a={}/10", w, a);
        let p = preset(&name).unwrap();
        let q = compute_quasimodes(&p.problem.to_float(), &LevelSelector::Value(6.0), HalfInt::from_doubled(4)).unwrap();
        let (check, report) = projector_check(&q, 1e-9).unwrap();
        prop_assert!(check.passed && report.passes(1e-9), "{}: {:?}", name, report);
        prop_assert_eq!(report.rank, 2);
        let t = transport_residual(&q, 1e-9).unwrap();
        prop_assert!(t.passed, "{}: transport {}", name, t.max_residual);
    }

    #[test]
    fn scalar_wells_satisfy_transport_exactly(c3 in -3i64..=3, c4 in 0i64..=3) {
        let lambda = vec![Rational::from_i64(1)];
        let mut v = Poly::from_terms(1, [(MultiIndex::new(vec![2]), Rational::from_i64(1))]);
        v.add_term(MultiIndex::new(vec![3]), Rational::from_ratio(c3, 2));
        v.add_term(MultiIndex::new(vec![4]), Rational::from_ratio(c4, 2));
        let p = JetProblem::new(lambda, v, MatPoly::zero(1, 1));
        let q = compute_quasimodes(&p, &LevelSelector::Index(1), HalfInt::from_doubled(4)).unwrap();
        let t = transport_residual(&q, 0.0).unwrap();
        prop_assert!(t.passed && t.max_residual == 0.0);
        prop_assert!(q.result.eigenvalues[0].terms().all(|(e, c)| e.is_integer() || c.is_zero()));
    }
}
