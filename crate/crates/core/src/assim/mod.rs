//! Strong-constraint incremental 4D-Var with a single observation time at
//! the end of the window.

mod covariance;
mod obs;
mod outer;
mod problem;

pub use covariance::{BackgroundSigmas, CovarianceModel};
pub use obs::ObsOperator;
pub use outer::{outer_loop, OuterOptions, OuterReport, PrecFactory};
pub use problem::{FourDVar, GaussNewtonSystem};
