//! Generalized multi-order total variation (GMO-TV) restoration of 1D signals.
//!
//! The penalty `sum_x |S (L g)(x)|` couples derivatives of orders `1..K`
//! through a learned structure matrix `S`. The crate provides
//!
//! - [`signal`]: circular convolution, exact adjoints and the derivative bank,
//! - [`prior`]: the penalty, its Frobenius-regularized form and `S`-gradients,
//! - [`mmkl`]: majorization-minimization estimation of `S`,
//! - [`restore`]: training-based restoration with a fixed `S`,
//! - [`joint`]: training-free alternation between `g` and `S`,
//! - [`harness`]: degradation, metrics, lambda tuning and benchmark tables.

pub mod eigen;
pub mod error;
pub mod harness;
pub mod joint;
pub mod mmkl;
pub mod prior;
pub mod restore;
pub mod signal;

pub use error::{Error, Result};
pub use prior::StructureMatrix;
pub use signal::{DerivativeBank, DerivativeStack, Kernel, Signal};
