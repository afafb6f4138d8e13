use da_precond::krylov::{cg, cg_bound, cg_observed, lanczos_extreme_eigs, pcg_split, CgOptions, Termination};
use da_precond::linop::{dot, DenseOperator, Diagonal, Identity, LinearOperator};
use da_precond::rng::GaussianRng;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn a_norm(d: &[f64], e: &[f64]) -> f64 {
    e.iter().zip(d).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

#[test]
fn cg_error_respects_condition_number_bound() {
    let d: Vec<f64> = (1..=100).map(|k| k as f64).collect();
    let a = Diagonal(d.clone());
    let kappa: f64 = 100.0;
    for seed in 0..5 {
        let b = GaussianRng::new(seed).vector(100);
        let xs: Vec<f64> = b.iter().zip(&d).map(|(bi, di)| bi / di).collect();
        let e0 = a_norm(&d, &xs);
        let mut violations = Vec::new();
        let (_, rep) = cg_observed(&a, &b, None, CgOptions { tol: 1e-12, maxit: 500 }, &mut |j, x| {
            let e: Vec<f64> = x.iter().zip(&xs).map(|(u, v)| u - v).collect();
            let bound = 2.0 * ((kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0)).powi(j as i32) * e0;
            if a_norm(&d, &e) > bound * (1.0 + 1e-12) + 1e-14 {
                violations.push(j);
            }
        });
        assert!(rep.converged());
        assert!(violations.is_empty(), "bound violated at iterations {violations:?}");
    }
    assert!((cg_bound(kappa, 3) - 2.0 * (9.0f64 / 11.0).powi(3)).abs() < 1e-15);
}

#[test]
fn identity_split_preconditioner_reproduces_cg() {
    let a = DenseOperator(common_spd(30, 4));
    let b = GaussianRng::new(5).vector(30);
    let opts = CgOptions { tol: 1e-10, maxit: 300 };
    let (x1, r1) = cg(&a, &b, None, opts);
    let (x2, r2) = pcg_split(&a, &Identity(30), &b, None, opts);
    assert_eq!(r1.iterations, r2.iterations);
    for (u, v) in x1.iter().zip(&x2) {
        assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0));
    }
    assert_eq!(r1.residual_history.len(), r1.iterations + 1);
}

#[test]
fn exact_split_preconditioner_converges_in_one_step() {
    let m = common_spd(12, 6);
    let chol = m.clone().cholesky().unwrap();
    let l = DenseOperator(chol.l().transpose().try_inverse().unwrap());
    let b = GaussianRng::new(6).vector(12);
    let (x, rep) = pcg_split(&DenseOperator(m.clone()), &l, &b, None, CgOptions { tol: 1e-9, maxit: 50 });
    assert!(rep.iterations <= 2, "took {} iterations", rep.iterations);
    let r = &m * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
    assert!(r.norm() < 1e-9);
}

#[test]
fn maxit_is_reported() {
    let a = Diagonal((1..=50).map(|k| k as f64).collect());
    let b = vec![1.0; 50];
    let (_, rep) = cg(&a, &b, None, CgOptions { tol: 1e-14, maxit: 3 });
    assert_eq!(rep.termination, Termination::MaxIter);
    assert_eq!(rep.iterations, 3);
}

#[test]
fn lanczos_recovers_extreme_eigenvalues() {
    let d: Vec<f64> = (1..=100).map(|k| k as f64).collect();
    let est = lanczos_extreme_eigs(&Diagonal(d), 100);
    assert!((est.lambda_max - 100.0).abs() < 1e-8);
    assert!((est.lambda_min - 1.0).abs() < 1e-8);
    assert!((est.kappa - 100.0).abs() < 1e-6);
}

fn common_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = GaussianRng::new(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard());
    &g * g.transpose() + DMatrix::identity(n, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cg_solves_random_spd(n in 2usize..25, seed in 0u64..1000) {
        let m = common_spd(n, seed);
        let b = GaussianRng::new(seed + 1).vector(n);
        let a = DenseOperator(m.clone());
        let (x, rep) = cg(&a, &b, None, CgOptions { tol: 1e-9, maxit: 10 * n });
        prop_assert!(rep.converged());
        let r: Vec<f64> = a.apply(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
        prop_assert!(dot(&r, &r).sqrt() < 1e-9 * 10.0);
        prop_assert!((rep.final_residual - *rep.residual_history.last().unwrap()).abs() == 0.0);
    }

    #[test]
    fn lanczos_extremes_bracket_rayleigh_quotients(n in 3usize..20, seed in 0u64..1000) {
        let m = common_spd(n, seed);
        let est = lanczos_extreme_eigs(&DenseOperator(m.clone()), n);
        let v = GaussianRng::new(seed + 2).vector(n);
        let av = DenseOperator(m).apply(&v);
        let rq = dot(&v, &av) / dot(&v, &v);
        prop_assert!(rq <= est.lambda_max * (1.0 + 1e-9) && rq >= est.lambda_min * (1.0 - 1e-9));
    }
}
