use thiserror::Error;

use crate::series::HalfInt;

pub type Result<T> = std::result::Result<T, QmfError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmfError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid problem: {0}")]
    Invalid(String),

    #[error("E0 not in spectrum: {0}")]
    NotInSpectrum(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degree invariant violated at j = {j}: degree {degree} exceeds {bound}")]
    DegreeInvariant { j: HalfInt, degree: usize, bound: usize },

    #[error("insufficient truncation: degree {required} required, {available} available")]
    Truncation { required: usize, available: usize },

    #[error("leading term is not the identity: {0}")]
    LeadingTerm(String),

    #[error("eikonal residual does not vanish at degree {0}")]
    EikonalResidual(usize),

    #[error("eigenvalue splitting at order {order} is not rational")]
    IrrationalSplitting { order: HalfInt },

    #[error("eigenvalue clustering is ambiguous at order {order} (gap {gap:e})")]
    AmbiguousSplitting { order: HalfInt, gap: f64 },

    #[error("degenerate level encountered: {0}")]
    Degenerate(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QmfError {
    fn from(e: std::io::Error) -> Self {
        QmfError::Io(e.to_string())
    }
}
