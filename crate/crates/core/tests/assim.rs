mod common;

use common::{model, problem, rel};
use da_precond::assim::{outer_loop, OuterOptions};
use da_precond::linop::{dot, norm2, LinearOperator};
use da_precond::rng::GaussianRng;
use da_precond::swmodel::StateVector;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn dense_gauss_newton_matches_explicit_assembly() {
    let m = model(4, 4);
    let (p, xb) = problem(&m, 12, 0.3, 5);
    let sys = p.build_gn_system(&xb).unwrap();
    let n = sys.dim();
    let n_obs = p.obs().n_obs();
    // G column by column from the tangent-linear model; H keeps the leading eta block.
    let traj = m.linearize(&xb, 12).unwrap();
    let mut g = DMatrix::zeros(n_obs, n);
    let mut a = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let mx = traj.tlm(&e);
        for row in 0..n_obs {
            g[(row, c)] = mx[row];
        }
        a.set_column(c, &DVector::from_vec(sys.apply(&e)));
    }
    let r_inv = DMatrix::from_diagonal(&DVector::from_iterator(n_obs, p.cov().obs_var().iter().map(|v| 1.0 / v)));
    let b_inv = DMatrix::from_diagonal(&DVector::from_iterator(n, p.cov().bg_var().iter().map(|v| 1.0 / v)));
    let expected = g.transpose() * r_inv * &g + b_inv;
    let err = (&a - &expected).norm() / expected.norm();
    assert!(err <= 1e-12, "relative mismatch {err:e}");
    assert!((&a - a.transpose()).norm() / a.norm() <= 1e-12);
}

#[test]
fn operator_is_symmetric_on_desk_grid() {
    let m = model(16, 16);
    let (p, xb) = problem(&m, 144, 1e-3, 6);
    let sys = p.build_gn_system(&xb).unwrap();
    let mut rng = GaussianRng::new(3);
    for _ in 0..10 {
        let (u, v) = (rng.vector(sys.dim()), rng.vector(sys.dim()));
        let (au, av) = (sys.apply(&u), sys.apply(&v));
        let gap = (dot(&au, &v) - dot(&u, &av)).abs() / (norm2(&au) * norm2(&v));
        assert!(gap <= 1e-12, "symmetry gap {gap:e}");
        assert!(dot(&au, &u) >= p.cov().min_b_inv() * dot(&u, &u) * (1.0 - 1e-12));
    }
}

#[test]
fn gradient_matches_cost_differences() {
    let m = model(6, 5);
    let (p, xb) = problem(&m, 8, 0.1, 7);
    let g = p.grad_cost(&xb).unwrap();
    let mut rng = GaussianRng::new(9);
    let d = rng.vector(xb.len());
    let h = 1e-5;
    let shift = |s: f64| {
        let v: Vec<f64> = xb.as_slice().iter().zip(&d).map(|(a, b)| a + s * b).collect();
        p.cost(&StateVector::from_vec(v, *xb.grid()).unwrap()).unwrap()
    };
    let fd = (shift(h) - shift(-h)) / (2.0 * h);
    assert!(rel(fd, dot(&g, &d)) <= 1e-6, "fd {fd} vs analytic {}", dot(&g, &d));
    let sys = p.build_gn_system(&xb).unwrap();
    for (r, gi) in sys.rhs().iter().zip(&g) {
        assert!((r + gi).abs() <= 1e-12 * norm2(&g));
    }
    assert!(rel(sys.cost(), p.cost(&xb).unwrap()) <= 1e-14);
}

#[test]
fn one_outer_iteration_reduces_cost() {
    let m = model(8, 8);
    let (p, xb) = problem(&m, 10, 0.1, 8);
    let rep = outer_loop(&p, &xb, OuterOptions { n_outer: 2, n_inner: 500, eps: 1e-9 }, &|_| Ok(None)).unwrap();
    assert_eq!(rep.iterates.len(), 3);
    assert!(rep.costs[1] < rep.costs[0]);
    assert!(rep.solves.iter().all(|s| s.converged()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn operator_symmetric_and_bounded_below(seed in 0u64..500) {
        let m = model(5, 5);
        let (p, xb) = problem(&m, 4, 0.5, seed);
        let sys = p.build_gn_system(&xb).unwrap();
        let mut rng = GaussianRng::new(seed + 1);
        let (u, v) = (rng.vector(sys.dim()), rng.vector(sys.dim()));
        let (au, av) = (sys.apply(&u), sys.apply(&v));
        prop_assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-12 * norm2(&au) * norm2(&v));
        prop_assert!(dot(&au, &u) >= p.cov().min_b_inv() * dot(&u, &u) * (1.0 - 1e-12));
    }
}
