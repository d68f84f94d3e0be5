//! Penalized free-boundary minimization of the first Dirichlet eigenvalue of
//! `-∇·(A∇·)` with bounded measurable coefficients, plus regularity diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod cli_io;
pub mod coeff;
pub mod diagnostics;
pub mod eigensolver;
pub mod error;
pub mod functional;
pub mod linalg;
pub mod mesh;
pub mod optimizer;

pub use error::{Error, Result};
