pub mod error;
pub mod game;
pub mod ident;
pub mod model;
pub mod poly;
pub mod restrictions;
pub mod scenarios;
pub mod tol;

pub use error::{Error, Result};
pub use poly::{Interval, MatPoly, Poly, PolyVec, Real, Sign};
pub use tol::Tolerances;

/// Polynomial in the discount factor with double-precision coefficients.
pub type BetaPoly = Poly<f64>;
/// Matrix polynomial with double-precision coefficients.
pub type MatrixPoly = MatPoly<f64>;
/// Vector of polynomials with double-precision coefficients.
pub type PolyVector = PolyVec<f64>;
