//! Limited-memory spectral preconditioners
//! `P = beta I + U (mu Lambda^alpha - beta I) U^T` and the exact baselines
//! they are compared against.

mod baseline;
mod eigenpairs;
mod spectral;

pub use baseline::{b_half_preconditioner, eym_residual, exact_leading_eigs, LeadingEigs};
pub use eigenpairs::{read_eigenpairs, write_eigenpairs, EigenpairSet, EIGS_MAGIC, EIGS_VERSION};
pub use spectral::{split_l, MuPolicy, SpectralPreconditioner, SplitFactor};
