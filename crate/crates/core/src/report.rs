//! Machine-readable result documents (`"schema": 1`).
//!
//! Exponents of ħ are written as doubled integers, exact coefficients as
//! `"p/q"` strings and float coefficients as JSON numbers. Object keys are
//! sorted, so exact-mode documents are byte-identical across runs.

use serde_json::{json, Value};

use crate::fd::FdReport;
use crate::hermite::{DegenerateLevel, HermiteIndex, SpectrumTable};
use crate::pipeline::{CheckOutcome, Quasimodes, VerificationReport};
use crate::scalar::Scalar;
use crate::series::{FormalScalarSeries, HalfInt, XJetSeries};

pub const SCHEMA_VERSION: u32 = 1;

pub fn series_json<S: Scalar>(s: &FormalScalarSeries<S>) -> Value {
    json!({
        "terms": s.terms().map(|(e, c)| json!([e.doubled, c.to_json()])).collect::<Vec<_>>(),
        "precision": s.prec().doubled,
    })
}

fn index_json(h: &HermiteIndex) -> Value {
    json!({ "alpha": h.alpha.entries(), "fiber": h.k + 1 })
}

pub fn level_json<S: Scalar>(level: &DegenerateLevel<S>) -> Value {
    json!({
        "e0": level.e0.to_json(),
        "multiplicity": level.m0,
        "offset_doubled": level.k.doubled,
        "parity": level.parity.name(),
        "members": level.members.iter().map(index_json).collect::<Vec<_>>(),
    })
}

fn jets_json<S: Scalar>(a: &XJetSeries<S>) -> Value {
    let mut terms = Vec::new();
    for (k, p) in a.coeffs() {
        for (alpha, values) in p.columns() {
            terms.push(json!({
                "k": k.doubled,
                "alpha": alpha.entries(),
                "values": values.iter().map(|v| v.to_json()).collect::<Vec<_>>(),
            }));
        }
    }
    json!({
        "offset_doubled": a.offset().doubled,
        "order_doubled": a.order().doubled,
        "x_degree": a.x_degree(),
        "terms": terms,
    })
}

pub fn check_json(c: &CheckOutcome) -> Value {
    json!({
        "name": c.name,
        "order_doubled": c.order.doubled,
        "max_residual": c.max_residual,
        "passed": c.passed,
        "detail": c.detail,
    })
}

pub fn report_json(r: &VerificationReport) -> Value {
    Value::Array(r.checks.iter().map(check_json).collect())
}

fn envelope(kind: &str, config: Value) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(SCHEMA_VERSION));
    m.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("kind".into(), json!(kind));
    m.insert("config".into(), config);
    m
}

/// Full result of `compute` or `verify`.
pub fn result_document<S: Scalar>(kind: &str, q: &Quasimodes<S>, report: Option<&VerificationReport>, config: Value) -> Value {
    let res = &q.result;
    let mut m = envelope(kind, config);
    m.insert("mode".into(), json!(res.mode));
    m.insert("order_doubled".into(), json!(res.order.doubled));
    m.insert("internal_order_doubled".into(), json!(res.internal_order.doubled));
    m.insert("level".into(), level_json(&res.level));
    m.insert(
        "energy_convention".into(),
        json!("energies are hbar times the listed series; quasimodes omit the global factor hbar^(-n/4)"),
    );
    m.insert(
        "eigenvalues".into(),
        Value::Array(res.eigenvalues.iter().map(series_json).collect()),
    );
    m.insert(
        "eigenfunctions".into(),
        Value::Array(
            res.amplitudes
                .iter()
                .zip(res.norms.iter().zip(&res.normalized))
                .map(|(a, (c, normalized))| {
                    json!({
                        "norm2": c.to_json(),
                        "normalized": normalized,
                        "jets": jets_json(a),
                    })
                })
                .collect(),
        ),
    );
    m.insert(
        "split_orders_doubled".into(),
        json!(res.split_orders.iter().map(|h: &HalfInt| h.doubled).collect::<Vec<_>>()),
    );
    if let Some(r) = report {
        m.insert("verification".into(), report_json(r));
    }
    Value::Object(m)
}

pub fn spectrum_document<S: Scalar>(table: &SpectrumTable<S>, config: Value) -> Value {
    let mut m = envelope("spectrum", config);
    m.insert("degree".into(), json!(table.degree));
    m.insert(
        "entries".into(),
        Value::Array(
            table
                .entries
                .iter()
                .map(|(h, e)| json!({ "alpha": h.alpha.entries(), "fiber": h.k + 1, "eigenvalue": e.to_json() }))
                .collect(),
        ),
    );
    Value::Object(m)
}

pub fn fd_json(r: &FdReport) -> Value {
    json!({
        "slope": r.slope,
        "required_slope": r.required_slope,
        "exact_series": r.exact_series,
        "passed": r.passed,
        "samples": r.samples.iter().map(|s| json!({
            "hbar": s.hbar,
            "half_width": s.half_width,
            "coarse": s.coarse,
            "fine": s.fine,
            "extrapolated": s.extrapolated,
            "series": s.series,
            "error": s.error,
            "discretization": s.discretization,
        })).collect::<Vec<_>>(),
    })
}

pub fn crosscheck_document(r: &FdReport, config: Value) -> Value {
    let mut m = envelope("crosscheck", config);
    m.insert("crosscheck".into(), fd_json(r));
    Value::Object(m)
}

/// Pretty JSON with a trailing newline.
pub fn to_text(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("JSON values always serialize");
    s.push('\n');
    s
}
