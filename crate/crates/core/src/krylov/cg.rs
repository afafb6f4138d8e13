//! Conjugate Gradient, plain and split-preconditioned.
//!
//! Both entry points share one engine. With a split preconditioner `L` the
//! engine runs CG on `L^T A L` but carries the unpreconditioned residual
//! `b - A x` alongside the preconditioned one; both are updated from the same
//! `A L p` product, so no extra operator application is needed. Stopping and
//! the recorded history use the unpreconditioned residual.

use std::time::Instant;

use super::report::{SolveReport, Termination};
use crate::linop::{axpy, dot, norm2, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop when `||b - A x||_2 < tol`.
    pub tol: f64,
    pub maxit: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-7, maxit: 2000 }
    }
}

/// Plain CG from `x0` (zero when `None`).
pub fn cg<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> (Vec<f64>, SolveReport) {
    engine::<A, A>(a, None, b, x0, opts, &mut |_, _| {})
}

/// [`cg`] with a callback receiving `(j, x_j)` for every iterate including `x_0`.
pub fn cg_observed<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> (Vec<f64>, SolveReport) {
    engine::<A, A>(a, None, b, x0, opts, observer)
}

/// CG on `L^T A L x~ = L^T (b - A x0)`, returning `x0 + L x~`.
pub fn pcg_split<A, L>(
    a: &A,
    l: &L,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    L: LinearOperator + ?Sized,
{
    engine(a, Some(l), b, x0, opts, &mut |_, _| {})
}

pub fn pcg_split_observed<A, L>(
    a: &A,
    l: &L,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    L: LinearOperator + ?Sized,
{
    engine(a, Some(l), b, x0, opts, observer)
}

fn engine<A, L>(
    a: &A,
    l: Option<&L>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> (Vec<f64>, SolveReport)
where
    A: LinearOperator + ?Sized,
    L: LinearOperator + ?Sized,
{
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    if let Some(l) = l {
        assert_eq!(l.dim(), n, "preconditioner dimension");
    }

    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "initial guess length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    // Unpreconditioned residual r and its preconditioned image rt = L^T r.
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.apply(&x);
        axpy(-1.0, &ax, &mut r);
    }
    let mut rt = match l {
        Some(l) => {
            let mut t = vec![0.0; n];
            l.apply_transpose_into(&r, &mut t);
            Some(t)
        }
        None => None,
    };
    let mut p = rt.as_deref().unwrap_or(&r).to_vec();
    let mut rho = {
        let v = rt.as_deref().unwrap_or(&r);
        dot(v, v)
    };

    let mut lp = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut history = vec![norm2(&r)];
    observer(0, &x);

    let mut termination = Termination::MaxIter;
    let mut breakdown_curvature = None;
    let mut j = 0;
    loop {
        let res = *history.last().unwrap();
        if res < opts.tol {
            termination = Termination::Tolerance;
            break;
        }
        if j == opts.maxit {
            break;
        }
        let dir: &[f64] = match l {
            Some(l) => {
                l.apply_into(&p, &mut lp);
                &lp
            }
            None => &p,
        };
        a.apply_into(dir, &mut w);
        let qv: &[f64] = match l {
            Some(l) => {
                l.apply_transpose_into(&w, &mut q);
                &q
            }
            None => &w,
        };
        let curvature = dot(&p, qv);
        if !(curvature > 0.0) || !curvature.is_finite() {
            termination = Termination::Breakdown;
            breakdown_curvature = Some(curvature);
            break;
        }
        let alpha = rho / curvature;
        axpy(alpha, dir, &mut x);
        axpy(-alpha, &w, &mut r);
        if let Some(rt) = rt.as_mut() {
            axpy(-alpha, qv, rt);
        }
        let rho_new = {
            let v = rt.as_deref().unwrap_or(&r);
            dot(v, v)
        };
        let beta = rho_new / rho;
        rho = rho_new;
        let v = rt.as_deref().unwrap_or(&r);
        for (pi, vi) in p.iter_mut().zip(v) {
            *pi = vi + beta * *pi;
        }
        j += 1;
        history.push(norm2(&r));
        observer(j, &x);
    }

    let report = SolveReport {
        iterations: j,
        final_residual: *history.last().unwrap(),
        residual_history: history,
        wall_time: start.elapsed(),
        termination,
        breakdown_curvature,
    };
    (x, report)
}

/// Classical bound `2 ((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^k` on the
/// A-norm error reduction after `k` CG iterations.
pub fn cg_bound(kappa: f64, k: usize) -> f64 {
    assert!(kappa >= 1.0, "condition number must be >= 1");
    let s = kappa.sqrt();
    2.0 * ((s - 1.0) / (s + 1.0)).powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseOperator, Diagonal, Identity};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wishart(n: usize, ridge: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * ridge
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let (x, rep) = cg(&Identity(3), &b, None, CgOptions { tol: 1e-12, maxit: 10 });
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.termination, Termination::Tolerance);
        assert_eq!(x, b);
    }

    #[test]
    fn random_spd_matches_direct_solve() {
        let m = wishart(10, 0.5, 1);
        let b: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let direct = m.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        let (x, rep) = cg(&DenseOperator(m), &b, None, CgOptions { tol: 1e-13, maxit: 200 });
        assert!(rep.converged());
        for (a, d) in x.iter().zip(direct.iter()) {
            assert!((a - d).abs() <= 1e-12 * d.abs().max(1.0), "{a} vs {d}");
        }
    }

    #[test]
    fn finite_termination_on_distinct_spectrum() {
        let a = Diagonal((1..=10).map(f64::from).collect());
        let b = vec![1.0; 10];
        let (_, rep) = cg(&a, &b, None, CgOptions { tol: 1e-12, maxit: 100 });
        assert!(rep.converged());
        assert!(rep.iterations <= 10, "{} iterations", rep.iterations);
    }

    #[test]
    fn history_length_matches_iterations() {
        let a = Diagonal((1..=30).map(f64::from).collect());
        let b = vec![1.0; 30];
        let (_, rep) = cg(&a, &b, None, CgOptions { tol: 1e-9, maxit: 7 });
        assert_eq!(rep.termination, Termination::MaxIter);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        assert_eq!(rep.final_residual, *rep.residual_history.last().unwrap());
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let a = Diagonal(vec![1.0, -1.0, 2.0]);
        let (_, rep) = cg(&a, &[0.0, 1.0, 0.0], None, CgOptions::default());
        assert_eq!(rep.termination, Termination::Breakdown);
        assert!(rep.breakdown_curvature.unwrap() <= 0.0);
    }

    #[test]
    fn split_with_identity_replays_cg() {
        let m = wishart(12, 0.1, 4);
        let a = DenseOperator(m);
        let b: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let opts = CgOptions { tol: 1e-10, maxit: 100 };
        let mut it_cg = Vec::new();
        let mut it_pcg = Vec::new();
        let (x1, r1) = cg_observed(&a, &b, None, opts, &mut |_, x| it_cg.push(x.to_vec()));
        let (x2, r2) =
            pcg_split_observed(&a, &Identity(12), &b, None, opts, &mut |_, x| it_pcg.push(x.to_vec()));
        assert_eq!(x1, x2);
        assert_eq!(it_cg, it_pcg);
        assert_eq!(r1.residual_history, r2.residual_history);
    }

    #[test]
    fn exact_inverse_sqrt_converges_in_one_step() {
        let m = wishart(8, 1.0, 5);
        let eig = m.clone().symmetric_eigen();
        let inv_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let b = vec![1.0; 8];
        let (_, rep) = pcg_split(
            &DenseOperator(m),
            &DenseOperator(inv_sqrt),
            &b,
            None,
            CgOptions { tol: 1e-10, maxit: 20 },
        );
        assert!(rep.converged());
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn nonzero_initial_guess() {
        let m = wishart(6, 1.0, 8);
        let b = vec![2.0; 6];
        let x0 = vec![0.3; 6];
        let opts = CgOptions { tol: 1e-12, maxit: 50 };
        let (x, rep) = cg(&DenseOperator(m.clone()), &b, Some(&x0), opts);
        assert!(rep.converged());
        let (xs, reps) =
            pcg_split(&DenseOperator(m.clone()), &Diagonal(vec![0.5; 6]), &b, Some(&x0), opts);
        assert!(reps.converged());
        for (p, q) in x.iter().zip(&xs) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!((rep.residual_history[0] - norm2(&{
            let mut r = b.clone();
            axpy(-1.0, &DenseOperator(m).apply(&x0), &mut r);
            r
        }))
        .abs()
            < 1e-14);
    }

    #[test]
    fn bound_edge_cases() {
        assert_eq!(cg_bound(1.0, 1), 0.0);
        assert_eq!(cg_bound(1.0, 5), 0.0);
        assert_eq!(cg_bound(37.0, 0), 2.0);
        assert!(cg_bound(100.0, 10) < cg_bound(100.0, 9));
    }
}
