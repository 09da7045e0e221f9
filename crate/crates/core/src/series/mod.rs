//! Exponents, polynomials and the two series spaces linked by rescaling.

mod formal;
mod halfint;
mod multiindex;
mod poly;
mod s0;

pub use formal::FormalScalarSeries;
pub use halfint::HalfInt;
pub use multiindex::MultiIndex;
pub use poly::{FiberPoly, MatPoly, Poly};
pub use s0::{lowest_degree, rescale, scalar_monomial, unrescale, S0Series, XJetSeries};
