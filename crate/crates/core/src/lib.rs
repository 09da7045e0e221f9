//! Formal quasimode expansions for semiclassical Schrödinger operators on
//! vector bundles, near a non-degenerate minimum of the potential.
//!
//! The crate works entirely with Taylor jets at the minimum. The operator is
//! conjugated by the eikonal phase, rescaled by `x = ħ^{1/2} y`, and the
//! resulting graded family is diagonalized order by order in ħ^{1/2}.

pub mod cli;
pub mod diagonalize;
pub mod error;
pub mod fd;
pub mod hermite;
pub mod linalg;
pub mod operator;
pub mod pipeline;
pub mod presets;
pub mod pairing;
pub mod projection;
pub mod report;
pub mod scalar;
pub mod series;
pub mod spec_file;

pub use error::{QmfError, Result};
pub use scalar::{Rational, Scalar};
