//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde_json::Value;

use qmf::cli::run_command;
use qmf::fd::crosscheck_eigenvalue_1d;
use qmf::hermite::LevelSelector;
use qmf::operator::JetProblem;
use qmf::pipeline::{
    bookkeeping_check, compute_quasimodes, orthonormality, parity_check, projector_check, rs_oracle, transport_residual,
    Quasimodes,
};
use qmf::presets::{preset, PRESET_NAMES};
use qmf::scalar::parse_rational;
use qmf::series::{lowest_degree, HalfInt};
use qmf::spec_file::{serialize_problem_spec, spec_from_problem, Mode};
use qmf::{Rational, Scalar};

type Verdict = std::result::Result<String, String>;

fn n(doubled: i64) -> HalfInt {
    HalfInt::from_doubled(doubled)
}

fn exact(name: &str, order: HalfInt) -> Result<Quasimodes<Rational>, String> {
    let p = preset(name).map_err(|e| e.to_string())?;
    compute_quasimodes(&p.problem, &p.level, order).map_err(|e| format!("{name}: {e}"))
}

fn float(name: &str, order: HalfInt) -> Result<Quasimodes<f64>, String> {
    let p = preset(name).map_err(|e| e.to_string())?;
    let level = match p.level {
        LevelSelector::Value(e) => LevelSelector::Value(e.to_f64()),
        LevelSelector::Index(i) => LevelSelector::Index(i),
    };
    compute_quasimodes(&p.problem.to_float(), &level, order).map_err(|e| format!("{name} (float): {e}"))
}

fn within(limit: Duration, start: Instant, mut v: Verdict) -> Verdict {
    let t = start.elapsed();
    if let Ok(s) = &mut v {
        if t > limit {
            return Err(format!("{s}; took {t:.2?}, limit {limit:?}"));
        }
        s.push_str(&format!(" [{t:.2?}]"));
    }
    v
}

fn random_rational(rng: &mut StdRng, lo: i64, hi: i64) -> Rational {
    Rational::from_ratio(rng.random_range(lo..=hi), rng.random_range(1..=3))
}

/// Σ(2α+1)λ + μ_k over all α with |α| ≤ degree, listed independently of the crate.
fn oracle_spectrum(lambda: &[Rational], mu: &[Rational], degree: u32) -> Vec<(Vec<u32>, usize, Rational)> {
    let mut out = Vec::new();
    let mut alpha = vec![0u32; lambda.len()];
    loop {
        if alpha.iter().sum::<u32>() <= degree {
            for (k, m) in mu.iter().enumerate() {
                let e = lambda
                    .iter()
                    .zip(&alpha)
                    .fold(m.clone(), |acc, (l, a)| acc + l.clone() * Rational::from_i64(2 * *a as i64 + 1));
                out.push((alpha.clone(), k, e));
            }
        }
        let mut i = 0;
        loop {
            if i == alpha.len() {
                return out;
            }
            alpha[i] += 1;
            if alpha[i] <= degree {
                break;
            }
            alpha[i] = 0;
            i += 1;
        }
    }
}

fn ac1() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x51ec);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..20 {
        let nv = rng.random_range(1..=3usize);
        let rank = rng.random_range(1..=2usize);
        let lambda: Vec<Rational> = (0..nv).map(|_| random_rational(&mut rng, 1, 5)).collect();
        let mu: Vec<Rational> = (0..rank).map(|_| random_rational(&mut rng, -3, 3)).collect();
        let problem = JetProblem::harmonic(lambda.clone(), mu.clone());

        let spec = spec_from_problem(problem.clone(), None, n(8), Mode::Exact);
        let path = dir.path().join(format!("case{case}.toml"));
        std::fs::write(&path, serialize_problem_spec(&spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let out = run_command(["qmf", "spectrum", "--spec", path.to_str().unwrap(), "--degree", "4"]);
        if out.code != 0 {
            return Err(format!("case {case}: spectrum exited {}: {}", out.code, out.stderr));
        }
        let entries = out.documents[0]["entries"].as_array().cloned().unwrap_or_default();
        let mut got: Vec<(Vec<u32>, usize, Rational)> = entries
            .iter()
            .map(|e: &Value| {
                let alpha = e["alpha"].as_array().unwrap().iter().map(|a| a.as_u64().unwrap() as u32).collect();
                let k = e["fiber"].as_u64().unwrap() as usize - 1;
                (alpha, k, parse_rational(e["eigenvalue"].as_str().unwrap()).unwrap())
            })
            .collect();
        let mut want = oracle_spectrum(&lambda, &mu, 4);
        got.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        want.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        if got != want {
            return Err(format!("case {case}: spectrum table differs from Σ(2α+1)λ + μ"));
        }

        let level = LevelSelector::Index(rng.random_range(0..3usize));
        let q = compute_quasimodes(&problem, &level, n(8)).map_err(|e| format!("case {case}: {e}"))?;
        for e in &q.result.eigenvalues {
            if e.prec() < n(8) {
                return Err(format!("case {case}: precision {} below 4", e.prec()));
            }
            for (exp, c) in e.terms() {
                let want = if exp == HalfInt::ZERO { q.result.level.e0.clone() } else { Rational::from_i64(0) };
                if *c != want {
                    return Err(format!("case {case}: coefficient {} at ħ^{exp}", c.display()));
                }
            }
            if e.coeff(HalfInt::ZERO) != q.result.level.e0 {
                return Err(format!("case {case}: leading coefficient is not E0"));
            }
        }
    }
    Ok("20 random instances: spectrum tables exact, E = ħE0 through N = 4".into())
}

fn ac2() -> Verdict {
    for c in ["1/2", "1", "2"] {
        let p = preset(&format!("witten1d:c={c}")).map_err(|e| e.to_string())?;
        let q = compute_quasimodes(&p.problem, &p.level, n(8)).map_err(|e| e.to_string())?;
        for e in &q.result.eigenvalues {
            if !e.is_zero() || e.prec() < n(8) {
                return Err(format!("c = {c}: E = {e}"));
            }
        }
        let t = transport_residual(&q, 0.0).map_err(|e| e.to_string())?;
        if !t.passed || t.max_residual != 0.0 {
            return Err(format!("c = {c}: transport residual {}", t.max_residual));
        }
    }
    Ok("c ∈ {1/2, 1, 2}: E ≡ 0 and transport residual 0 through N = 4".into())
}

fn ac3() -> Verdict {
    let mut worst_float: f64 = 0.0;
    for name in ["cubic", "bundle2"] {
        let q = exact(name, n(6))?;
        let (_, r) = projector_check(&q, 0.0).map_err(|e| e.to_string())?;
        if !r.passes(0.0) || r.rank != q.result.level.m0 {
            return Err(format!("{name} exact: {r:?}"));
        }
        let qf = float(name, n(6))?;
        let (_, rf) = projector_check(&qf, 1e-9).map_err(|e| e.to_string())?;
        if !rf.passes(1e-9) || rf.rank != qf.result.level.m0 {
            return Err(format!("{name} float: {rf:?}"));
        }
        worst_float = worst_float.max(rf.max_defect());
    }
    Ok(format!("cubic, bundle2 through N = 3: exact defects 0, float max {worst_float:.1e}"))
}

fn ac4() -> Verdict {
    for name in PRESET_NAMES {
        let q = exact(name, n(6))?;
        let t = transport_residual(&q, 0.0).map_err(|e| e.to_string())?;
        if !t.passed || t.max_residual != 0.0 {
            return Err(format!("{name}: residual {}", t.max_residual));
        }
    }
    Ok(format!("{} presets: transport residual exactly 0 through N = 3", PRESET_NAMES.len()))
}

fn ac5() -> Verdict {
    for name in ["cubic", "iso2d"] {
        let q = exact(name, n(8))?;
        for e in &q.result.eigenvalues {
            if e.prec() < n(8) {
                return Err(format!("{name}: precision {}", e.prec()));
            }
            if let Some((exp, c)) = e.terms().find(|(exp, c)| !exp.is_integer() && !c.is_zero()) {
                return Err(format!("{name}: coefficient {} at ħ^{exp}", c.display()));
            }
        }
        let p = parity_check(&q, 0.0);
        if !p.passed || !q.result.level.parity.is_uniform() {
            return Err(format!("{name}: {}", p.detail));
        }
    }
    Ok("cubic ground state and iso2d odd level: no half-integer terms through N = 4".into())
}

fn ac6() -> Verdict {
    for name in ["cubic", "quartic"] {
        let p = preset(name).map_err(|e| e.to_string())?;
        let q = compute_quasimodes(&p.problem, &p.level, n(4)).map_err(|e| e.to_string())?;
        let rs = rs_oracle(&p.problem, &p.level, n(4)).map_err(|e| e.to_string())?;
        for e in HalfInt::range_inclusive(HalfInt::ZERO, n(4)) {
            if q.result.eigenvalues[0].coeff(e) != rs.coeff(e) {
                return Err(format!("{name}: ħ^{e}: {} vs {}", q.result.eigenvalues[0].coeff(e).display(), rs.coeff(e).display()));
            }
        }
        let qf = float(name, n(4))?;
        let pf = p.problem.to_float();
        let lf = LevelSelector::Value(match &p.level {
            LevelSelector::Value(e) => e.to_f64(),
            LevelSelector::Index(_) => unreachable!(),
        });
        let rsf = rs_oracle(&pf, &lf, n(4)).map_err(|e| e.to_string())?;
        for e in HalfInt::range_inclusive(HalfInt::ZERO, n(4)) {
            let d = (qf.result.eigenvalues[0].coeff(e) - rsf.coeff(e)).abs();
            if d > 1e-10 {
                return Err(format!("{name} float: ħ^{e} differs by {d:e}"));
            }
        }
    }
    Ok("cubic, quartic: pipeline = RS oracle through ħ², exact and float".into())
}

fn ac7() -> Verdict {
    let p = preset("quartic:g=1").map_err(|e| e.to_string())?;
    let q = compute_quasimodes(&p.problem, &p.level, n(4)).map_err(|e| e.to_string())?;
    let r = crosscheck_eigenvalue_1d(&p.problem, &q.result.eigenvalues[0], n(4), 0, &[0.2, 0.1, 0.05], 4096)
        .map_err(|e| e.to_string())?;
    if r.slope < 3.5 || !r.passed {
        return Err(format!("slope {:.3}", r.slope));
    }
    Ok(format!("V = x² + x⁴, N = 2: log-log slope {:.3} ≥ 3.5", r.slope))
}

fn ac8() -> Verdict {
    let q = exact("iso2d", n(6))?;
    if q.result.level.m0 != 2 {
        return Err(format!("multiplicity {}", q.result.level.m0));
    }
    let o = orthonormality(&q, 0.0).map_err(|e| e.to_string())?;
    if !o.passed {
        return Err(format!("exact: residual {}", o.max_residual));
    }
    // ψ_j/√c_j, evaluated in floating point, must pair to δ_ij
    let qf = float("iso2d", n(6))?;
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let s = qf.setup.pairing.pair(&qf.result.psi[i], &qf.result.psi[j]).map_err(|e| e.to_string())?;
            let scale = (qf.result.norms[i] * qf.result.norms[j]).sqrt();
            for e in HalfInt::range_inclusive(HalfInt::ZERO, n(6)) {
                let want = if i == j && e == HalfInt::ZERO { 1.0 } else { 0.0 };
                worst = worst.max((s.coeff(e) / scale - want).abs());
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("float normalized pairing defect {worst:e}"));
    }
    let norms: Vec<String> = q.result.norms.iter().map(|c| c.display()).collect();
    Ok(format!(
        "iso2d m0 = 2 through N = 3: pairings δ_ij c_j exactly (c = {}), normalized float defect {worst:.1e}",
        norms.join(", ")
    ))
}

fn ac9() -> Verdict {
    for name in PRESET_NAMES {
        let q = exact(name, n(6))?;
        let b = bookkeeping_check(&q);
        if !b.passed {
            return Err(format!("{name}: {}", b.detail));
        }
        let kmax = q.result.level.members.iter().map(|h| h.alpha.entries().iter().sum::<u32>()).max().unwrap_or(0);
        if q.result.level.k.doubled != kmax as i64 {
            return Err(format!("{name}: K = {} but max |α| = {kmax}", q.result.level.k));
        }
        for a in &q.result.amplitudes {
            for (k, p) in a.coeffs() {
                let bound = (q.result.level.k - *k).doubled.max(0) as usize;
                if lowest_degree(p).is_some_and(|d| d < bound) {
                    return Err(format!("{name}: a_k at k = {k} has degree below {bound}"));
                }
            }
        }
    }
    Ok(format!("{} presets: K = max|α|/2 and lowest degrees ≥ max(2(K − k), 0)", PRESET_NAMES.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict, Option<u64>); 9] = [
        ("AC1 harmonic exactness", ac1, Some(5)),
        ("AC2 Witten supersymmetry", ac2, Some(10)),
        ("AC3 projector laws", ac3, Some(60)),
        ("AC4 transport equations", ac4, None),
        ("AC5 parity", ac5, None),
        ("AC6 RS oracle", ac6, Some(30)),
        ("AC7 numeric convergence", ac7, Some(60)),
        ("AC8 orthonormality", ac8, None),
        ("AC9 degree bookkeeping", ac9, None),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let v = f();
        let v = match limit {
            Some(s) => within(Duration::from_secs(s), start, v),
            None => v.map(|s| format!("{s} [{:.2?}]", start.elapsed())),
        };
        match v {
            Ok(msg) => println!("{name}: PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{name}: FAIL  {msg}");
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
