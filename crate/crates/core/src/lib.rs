//! Relaxation envelopes for extended-real-valued integrands: convex and
//! rank-one envelopes on grids, cell-problem quasiconvexification, radial
//! regularization, set-function calculus on dyadic cube families, and a
//! two-sided evaluator for relaxed functionals.

pub mod corpus;
pub mod envelopes;
pub mod error;
pub mod ext;
pub mod integrand;
pub mod mesh;
pub mod relaxation;
pub mod sampling;
pub mod setfun;

pub use error::{Error, Result};
pub use ext::Ext;
