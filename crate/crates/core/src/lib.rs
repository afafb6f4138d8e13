//! Incremental 4D-Var on a shallow-water model with spectral preconditioners
//! for Conjugate Gradient, including preconditioners whose eigenpairs come
//! from a trained surrogate network.
//!
//! Module map:
//!
//! - [`swmodel`]: C-grid shallow-water model with exact tangent-linear and adjoint
//! - [`assim`]: 4D-Var cost, gradient, Gauss-Newton operator, outer loop
//! - [`krylov`]: CG, split-preconditioned CG, Lanczos extreme eigenvalues
//! - [`precond`]: limited-memory spectral preconditioners and exact baselines
//! - [`surrogate`]: state-to-eigenpairs network, randomized Frobenius loss, training
//! - [`dataset`]: online generation and storage of training triples
//! - [`bench`]: paired comparison harness across preconditioner variants

pub mod assim;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod krylov;
pub mod linop;
pub mod precond;
pub mod rng;
pub mod scenario;
pub mod surrogate;
pub mod swmodel;

pub use error::{Error, Result};
