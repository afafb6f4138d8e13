//! Conjugate Gradient solvers and Lanczos spectral diagnostics.

mod cg;
mod lanczos;
mod report;

pub use cg::{cg, cg_bound, cg_observed, pcg_split, pcg_split_observed, CgOptions};
pub use lanczos::{lanczos_extreme_eigs, Lanczos, LanczosDecomposition};
pub use report::{write_residual_csv, ConditionEstimate, SolveReport, Termination};
