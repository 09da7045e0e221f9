//! TOML problem files.
//!
//! ```toml
//! [problem]
//! n = 1
//! rank = 1
//! mode = "exact"
//! order = "2"
//!
//! [lambda]
//! values = ["1"]
//!
//! [potential]
//! terms = [{ alpha = [2], coeff = "1" }, { alpha = [3], coeff = "1/2" }]
//!
//! [level]
//! value = "1"
//! ```
//!
//! Coefficients are strings (`"p/q"`, decimals) or TOML numbers. Omitted
//! `[metric_inverse]` means the flat metric; when present it lists every term of
//! `g^{ij}`, the identity at the origin included.

use serde::{Deserialize, Serialize};

use crate::error::{QmfError, Result};
use crate::hermite::LevelSelector;
use crate::operator::{flat_metric, JetProblem, LaplaceData};
use crate::scalar::{format_rational, parse_rational, Rational, Scalar};
use crate::series::{HalfInt, MatPoly, MultiIndex, Poly};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Float,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        }
    }
}

/// Which checks `verify` runs, and their numeric settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChecksConfig {
    pub enabled: Vec<String>,
    pub tolerance: f64,
    pub hbar: Vec<f64>,
    pub grid: usize,
}

pub const CHECK_NAMES: [&str; 9] = [
    "transport",
    "eigen",
    "orthonormality",
    "parity",
    "bookkeeping",
    "diagonalization",
    "projector",
    "rs",
    "crosscheck",
];

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            enabled: CHECK_NAMES[..7].iter().map(|s| s.to_string()).collect(),
            tolerance: 1e-9,
            hbar: vec![0.2, 0.1, 0.05],
            grid: 4096,
        }
    }
}

impl ChecksConfig {
    /// Parses `all` or a comma-separated list of check names.
    pub fn parse_list(text: &str) -> Result<Vec<String>> {
        if text.trim() == "all" {
            return Ok(CHECK_NAMES.iter().map(|s| s.to_string()).collect());
        }
        text.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                if CHECK_NAMES.contains(&s) {
                    Ok(s.to_string())
                } else {
                    Err(QmfError::Parse(format!("unknown check '{s}' (available: all, {})", CHECK_NAMES.join(", "))))
                }
            })
            .collect()
    }

    pub fn has(&self, name: &str) -> bool {
        self.enabled.iter().any(|c| c == name)
    }
}

/// A parsed problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub problem: JetProblem<Rational>,
    pub mode: Mode,
    pub order: HalfInt,
    pub level: Option<LevelSelector<Rational>>,
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Coeff {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Coeff {
    fn value(&self) -> Result<Rational> {
        match self {
            Coeff::Int(i) => Ok(Rational::from_i64(*i)),
            Coeff::Float(f) if f.is_finite() => parse_rational(&format!("{f:e}")),
            Coeff::Float(f) => Err(QmfError::Parse(format!("invalid coefficient {f}"))),
            Coeff::Text(s) => parse_rational(s),
        }
    }

    fn from(q: &Rational) -> Self {
        Coeff::Text(format_rational(q))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    problem: ProblemSection,
    lambda: LambdaSection,
    potential: TermsSection<PolyTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric_inverse: Option<TermsSection<MetricTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endomorphism: Option<TermsSection<EntryTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connection: Option<ConnectionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fiber_metric: Option<TermsSection<EntryTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<LevelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checks: Option<ChecksSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    n: usize,
    #[serde(default = "one")]
    rank: usize,
    #[serde(default)]
    mode: Mode,
    #[serde(default = "default_order")]
    order: Coeff,
}

fn one() -> usize {
    1
}

fn default_order() -> Coeff {
    Coeff::Int(2)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaSection {
    values: Vec<Coeff>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermsSection<T> {
    #[serde(default = "Vec::new")]
    terms: Vec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyTerm {
    alpha: Vec<u32>,
    coeff: Coeff,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricTerm {
    i: usize,
    j: usize,
    alpha: Vec<u32>,
    coeff: Coeff,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryTerm {
    row: usize,
    col: usize,
    alpha: Vec<u32>,
    coeff: Coeff,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionTerm {
    direction: usize,
    row: usize,
    col: usize,
    alpha: Vec<u32>,
    coeff: Coeff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum ConnectionKind {
    #[default]
    Connection,
    Raw,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionSection {
    #[serde(default)]
    kind: ConnectionKind,
    /// Connection coefficients `Γ_j`, or drift `b_j` for `kind = "raw"`.
    #[serde(default = "Vec::new")]
    terms: Vec<DirectionTerm>,
    /// Endomorphism part of the Laplace-type operator.
    #[serde(default = "Vec::new")]
    endo: Vec<EntryTerm>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Coeff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChecksSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enabled: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

fn index(n: usize, alpha: &[u32], what: &str) -> Result<MultiIndex> {
    if alpha.len() != n {
        return Err(QmfError::Dimension(format!("{what}: multi-index {alpha:?} must have {n} entries")));
    }
    Ok(MultiIndex::new(alpha.to_vec()))
}

fn entries_to_matpoly(n: usize, rank: usize, terms: &[EntryTerm], what: &str) -> Result<MatPoly<Rational>> {
    let mut m = MatPoly::zero(n, rank);
    for t in terms {
        if t.row >= rank || t.col >= rank {
            return Err(QmfError::Dimension(format!("{what}: entry ({}, {}) outside rank {rank}", t.row, t.col)));
        }
        let p = Poly::monomial(index(n, &t.alpha, what)?, t.coeff.value()?);
        let e = m.entry_mut(t.row, t.col);
        *e = &*e + &p;
    }
    Ok(m)
}

/// Parses and validates a problem file.
pub fn parse_problem_spec(text: &str) -> Result<ProblemSpec> {
    let doc: FileDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        QmfError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let n = doc.problem.n;
    let rank = doc.problem.rank;
    let order: HalfInt = {
        let q = doc.problem.order.value()?;
        let doubled = q.clone() * Rational::from_i64(2);
        if !doubled.is_integer() || q < Rational::from_i64(0) {
            return Err(QmfError::Invalid(format!("order must be a nonnegative multiple of 1/2, got {}", format_rational(&q))));
        }
        HalfInt::from_doubled(doubled.to_integer().try_into().map_err(|_| QmfError::Invalid("order too large".into()))?)
    };
    let lambda: Vec<Rational> = doc.lambda.values.iter().map(|c| c.value()).collect::<Result<_>>()?;
    let mut potential = Poly::zero(n);
    for t in &doc.potential.terms {
        potential = &potential + &Poly::monomial(index(n, &t.alpha, "potential")?, t.coeff.value()?);
    }
    let endomorphism = match &doc.endomorphism {
        Some(s) => entries_to_matpoly(n, rank, &s.terms, "endomorphism")?,
        None => MatPoly::zero(n, rank),
    };
    let mut problem = JetProblem::new(lambda, potential, endomorphism);
    problem.rank = rank;
    if let Some(m) = &doc.metric_inverse {
        let mut g = vec![Poly::zero(n); n * n];
        for t in &m.terms {
            if t.i >= n || t.j >= n {
                return Err(QmfError::Dimension(format!("metric_inverse: entry ({}, {}) outside dimension {n}", t.i, t.j)));
            }
            let p = Poly::monomial(index(n, &t.alpha, "metric_inverse")?, t.coeff.value()?);
            g[t.i * n + t.j] = &g[t.i * n + t.j] + &p;
        }
        problem.metric_inverse = g;
    } else {
        problem.metric_inverse = flat_metric(n);
    }
    if let Some(c) = &doc.connection {
        let mut dirs = vec![MatPoly::zero(n, rank); n];
        for t in &c.terms {
            if t.direction >= n || t.row >= rank || t.col >= rank {
                return Err(QmfError::Dimension("connection term outside the problem shape".into()));
            }
            let p = Poly::monomial(index(n, &t.alpha, "connection")?, t.coeff.value()?);
            let e = dirs[t.direction].entry_mut(t.row, t.col);
            *e = &*e + &p;
        }
        let endo = entries_to_matpoly(n, rank, &c.endo, "connection endo")?;
        problem.laplace = match c.kind {
            ConnectionKind::Connection => LaplaceData::Connection { gamma: dirs, endo },
            ConnectionKind::Raw => LaplaceData::Raw { drift: dirs, endo },
        };
    } else {
        problem.laplace = LaplaceData::Connection {
            gamma: vec![MatPoly::zero(n, rank); n],
            endo: MatPoly::zero(n, rank),
        };
    }
    if let Some(f) = &doc.fiber_metric {
        problem.fiber_metric = Some(entries_to_matpoly(n, rank, &f.terms, "fiber_metric")?);
    }
    problem.validate()?;
    let level = match &doc.level {
        None => None,
        Some(LevelSection { value: Some(v), index: None }) => Some(LevelSelector::Value(v.value()?)),
        Some(LevelSection { value: None, index: Some(i) }) => Some(LevelSelector::Index(*i)),
        Some(_) => return Err(QmfError::Invalid("[level] needs exactly one of value or index".into())),
    };
    let mut checks = ChecksConfig::default();
    if let Some(c) = &doc.checks {
        if let Some(e) = &c.enabled {
            checks.enabled = ChecksConfig::parse_list(&e.join(","))?;
        }
        if let Some(t) = c.tolerance {
            checks.tolerance = t;
        }
        if let Some(h) = &c.hbar {
            checks.hbar = h.clone();
        }
        if let Some(g) = c.grid {
            checks.grid = g;
        }
    }
    Ok(ProblemSpec {
        problem,
        mode: doc.problem.mode,
        order,
        level,
        checks,
    })
}

fn poly_terms(p: &Poly<Rational>) -> Vec<(Vec<u32>, Coeff)> {
    p.terms().map(|(a, c)| (a.entries().to_vec(), Coeff::from(c))).collect()
}

fn matpoly_terms(m: &MatPoly<Rational>) -> Vec<EntryTerm> {
    let mut out = Vec::new();
    for row in 0..m.rank() {
        for col in 0..m.rank() {
            for (alpha, coeff) in poly_terms(m.entry(row, col)) {
                out.push(EntryTerm { row, col, alpha, coeff });
            }
        }
    }
    out
}

/// Writes a problem file that parses back to the same problem.
pub fn serialize_problem_spec(spec: &ProblemSpec) -> Result<String> {
    let p = &spec.problem;
    let n = p.n;
    let flat = p.metric_inverse == flat_metric::<Rational>(n);
    let metric_inverse = (!flat).then(|| TermsSection {
        terms: (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .flat_map(|(i, j)| {
                poly_terms(p.metric(i, j))
                    .into_iter()
                    .map(move |(alpha, coeff)| MetricTerm { i, j, alpha, coeff })
            })
            .collect(),
    });
    let (kind, dirs, endo) = match &p.laplace {
        LaplaceData::Connection { gamma, endo } => (ConnectionKind::Connection, gamma, endo),
        LaplaceData::Raw { drift, endo } => (ConnectionKind::Raw, drift, endo),
    };
    let mut dir_terms = Vec::new();
    for (direction, m) in dirs.iter().enumerate() {
        for t in matpoly_terms(m) {
            dir_terms.push(DirectionTerm {
                direction,
                row: t.row,
                col: t.col,
                alpha: t.alpha,
                coeff: t.coeff,
            });
        }
    }
    let connection = (kind == ConnectionKind::Raw || !dir_terms.is_empty() || !endo.is_zero()).then(|| ConnectionSection {
        kind,
        terms: dir_terms,
        endo: matpoly_terms(endo),
    });
    let level = spec.level.as_ref().map(|l| match l {
        LevelSelector::Value(v) => LevelSection {
            value: Some(Coeff::from(v)),
            index: None,
        },
        LevelSelector::Index(i) => LevelSection {
            value: None,
            index: Some(*i),
        },
    });
    let defaults = ChecksConfig::default();
    let checks = (spec.checks != defaults).then(|| ChecksSection {
        enabled: Some(spec.checks.enabled.clone()),
        tolerance: Some(spec.checks.tolerance),
        hbar: Some(spec.checks.hbar.clone()),
        grid: Some(spec.checks.grid),
    });
    let doc = FileDoc {
        problem: ProblemSection {
            n,
            rank: p.rank,
            mode: spec.mode,
            order: Coeff::Text(spec.order.to_string()),
        },
        lambda: LambdaSection {
            values: p.lambda.iter().map(Coeff::from).collect(),
        },
        potential: TermsSection {
            terms: poly_terms(&p.potential)
                .into_iter()
                .map(|(alpha, coeff)| PolyTerm { alpha, coeff })
                .collect(),
        },
        metric_inverse,
        endomorphism: (!p.endomorphism.is_zero()).then(|| TermsSection {
            terms: matpoly_terms(&p.endomorphism),
        }),
        connection,
        fiber_metric: p.fiber_metric.as_ref().map(|g| TermsSection { terms: matpoly_terms(g) }),
        level,
        checks,
    };
    toml::to_string(&doc).map_err(|e| QmfError::Io(e.to_string()))
}

/// A spec wrapping a preset problem.
pub fn spec_from_problem(problem: JetProblem<Rational>, level: Option<LevelSelector<Rational>>, order: HalfInt, mode: Mode) -> ProblemSpec {
    ProblemSpec {
        problem,
        mode,
        order,
        level,
        checks: ChecksConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARMONIC: &str = r#"
[problem]
n = 1
order = 3

[lambda]
values = [1]

[potential]
terms = [{ alpha = [2], coeff = 1 }]
"#;

    #[test]
    fn minimal_harmonic() {
        let spec = parse_problem_spec(HARMONIC).unwrap();
        assert_eq!(spec.problem, JetProblem::harmonic(vec![Rational::from_i64(1)], vec![Rational::from_i64(0)]));
        assert_eq!(spec.order, HalfInt::from_doubled(6));
        assert_eq!(spec.mode, Mode::Exact);
    }

    #[test]
    fn unnormalized_quadratic_part() {
        let text = HARMONIC.replace("coeff = 1 }", "coeff = 2 }");
        let err = parse_problem_spec(&text).unwrap_err();
        assert!(err.to_string().contains("coordinates not normalized"), "{err}");
    }

    #[test]
    fn unknown_key_has_position() {
        let text = HARMONIC.replace("order = 3", "order = 3\nsize = 2");
        match parse_problem_spec(&text).unwrap_err() {
            QmfError::Syntax { line, column, .. } => {
                assert_eq!(line, 5);
                assert_eq!(column, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
