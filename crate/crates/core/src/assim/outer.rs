//! Outer (relinearization) loop with CG inner solves.

use log::warn;

use super::{FourDVar, GaussNewtonSystem};
use crate::error::Result;
use crate::krylov::{cg, pcg_split, CgOptions, SolveReport};
use crate::linop::LinearOperator;
use crate::swmodel::StateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterOptions {
    pub n_outer: usize,
    /// Inner CG iteration cap.
    pub n_inner: usize,
    /// Inner stop on `||r_j||_2 < eps`.
    pub eps: f64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self { n_outer: 1, n_inner: 2000, eps: 1e-7 }
    }
}

/// Builds a split preconditioner for the system at hand; `None` means plain CG.
pub type PrecFactory<'f> =
    dyn Fn(&GaussNewtonSystem<'_>) -> Result<Option<Box<dyn LinearOperator>>> + 'f;

#[derive(Debug, Clone)]
pub struct OuterReport {
    /// `x_0, x_1, ..., x_{n_outer}`
    pub iterates: Vec<StateVector>,
    /// `J(x_i)` for every iterate.
    pub costs: Vec<f64>,
    /// One inner solve per outer iteration.
    pub solves: Vec<SolveReport>,
    /// Outer iterations at which `J` increased.
    pub ascents: Vec<usize>,
}

pub fn outer_loop(
    problem: &FourDVar,
    x0: &StateVector,
    opts: OuterOptions,
    prec_factory: &PrecFactory<'_>,
) -> Result<OuterReport> {
    assert!(opts.n_outer >= 1, "n_outer must be at least 1");
    let cg_opts = CgOptions { tol: opts.eps, maxit: opts.n_inner };
    let mut x = x0.clone();
    let mut report =
        OuterReport { iterates: vec![x.clone()], costs: vec![], solves: vec![], ascents: vec![] };
    for i in 0..opts.n_outer {
        let system = problem.build_gn_system(&x)?;
        report.costs.push(system.cost());
        let (dx, solve) = match prec_factory(&system)? {
            Some(l) => pcg_split(&system, l.as_ref(), system.rhs(), None, cg_opts),
            None => cg(&system, system.rhs(), None, cg_opts),
        };
        if !solve.converged() {
            warn!("outer iteration {i}: inner solve ended by {:?}", solve.termination);
        }
        report.solves.push(solve);
        let mut next = x.clone();
        for (a, d) in next.as_mut_slice().iter_mut().zip(&dx) {
            *a += d;
        }
        x = next;
        report.iterates.push(x.clone());
    }
    report.costs.push(problem.cost(&x)?);
    for i in 1..report.costs.len() {
        if report.costs[i] > report.costs[i - 1] {
            warn!("cost increased at outer iteration {}: {} -> {}", i - 1, report.costs[i - 1], report.costs[i]);
            report.ascents.push(i - 1);
        }
    }
    Ok(report)
}
