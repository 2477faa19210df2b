//! Semi-supervised active linear regression.
//!
//! A design matrix is split into an unlabeled block `X1`, whose labels cost one
//! query each, and a labeled block `X2`, whose labels are free. The
//! [`asura`] sampler picks a short weighted sequence of rows from the stacked
//! matrix; only the picked `X1` rows are queried and a weighted least-squares
//! fit on the picked rows approximates the full least-squares solution.

pub mod asura;
pub mod baselines;
pub mod error;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Dataset, Matrix, SvdFactors};
