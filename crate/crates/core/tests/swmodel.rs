mod common;

use common::{model, spun_up};
use da_precond::linop::{dot, norm2};
use da_precond::rng::GaussianRng;
use da_precond::swmodel::{GridSpec, ModelParams, StateVector};
use da_precond::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn scaled_direction(x: &StateVector, rng: &mut GaussianRng, eta: f64, vel: f64) -> Vec<f64> {
    let g = x.grid();
    let mut d = rng.vector(x.len());
    d[..g.n_eta()].iter_mut().for_each(|e| *e *= eta);
    d[g.n_eta()..].iter_mut().for_each(|w| *w *= vel);
    d
}

#[test]
fn adjoint_identity_holds_on_desk_grid() {
    let m = model(16, 16);
    let x = spun_up(&m, 300, 1);
    let mut rng = GaussianRng::new(11);
    for steps in [1usize, 5, 20] {
        let traj = m.linearize(&x, steps).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let dx = rng.vector(x.len());
            let dy = rng.vector(x.len());
            let gdx = traj.tlm(&dx);
            let gtdy = traj.adjoint(&dy);
            let gap = (dot(&gdx, &dy) - dot(&dx, &gtdy)).abs() / (norm2(&gdx) * norm2(&dy));
            worst = worst.max(gap);
        }
        assert!(worst <= 1e-12, "window {steps}: worst relative gap {worst:e}");
    }
}

#[test]
fn taylor_remainder_is_second_order() {
    let m = model(16, 16);
    let x = spun_up(&m, 300, 2);
    let steps = 20;
    let traj = m.linearize(&x, steps).unwrap();
    let mut rng = GaussianRng::new(12);
    let dx = scaled_direction(&x, &mut rng, 10.0, 1.0);
    let mx = m.propagate(&x, steps).unwrap();
    let jdx = traj.tlm(&dx);
    let eps: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
    let mut pts = Vec::new();
    for &e in &eps {
        let xe: Vec<f64> = x.as_slice().iter().zip(&dx).map(|(a, d)| a + e * d).collect();
        let me = m.propagate(&StateVector::from_vec(xe, *x.grid()).unwrap(), steps).unwrap();
        let rem: Vec<f64> = me
            .as_slice()
            .iter()
            .zip(mx.as_slice())
            .zip(&jdx)
            .map(|((a, b), j)| a - b - e * j)
            .collect();
        pts.push((e.ln(), norm2(&rem).ln()));
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx_, my) = (sx / k, sy / k);
    let slope = pts.iter().map(|p| (p.0 - mx_) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx_).powi(2)).sum::<f64>();
    assert!((slope - 2.0).abs() <= 0.2, "Taylor slope {slope}, points {pts:?}");
}

#[test]
fn tlm_matches_dense_finite_difference_jacobian() {
    let m = model(4, 4);
    let x = spun_up(&m, 100, 3);
    let n = x.len();
    let steps = 10;
    let traj = m.linearize(&x, steps).unwrap();
    let mut jt = DMatrix::zeros(n, n);
    let mut jf = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        jt.set_column(c, &nalgebra::DVector::from_vec(traj.tlm(&e)));
        let h = 1e-5 * x.as_slice()[c].abs().max(1e-2);
        let shifted = |s: f64| {
            let mut v = x.as_slice().to_vec();
            v[c] += s;
            m.propagate(&StateVector::from_vec(v, *x.grid()).unwrap(), steps).unwrap().into_vec()
        };
        let (p, q) = (shifted(h), shifted(-h));
        let col: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        jf.set_column(c, &nalgebra::DVector::from_vec(col));
    }
    let err = (&jt - &jf).norm() / jt.norm();
    assert!(err <= 1e-6, "relative Jacobian mismatch {err:e}");
}

#[test]
fn desk_and_full_state_lengths() {
    assert_eq!(GridSpec::desk().state_len(), 736);
    assert_eq!(GridSpec::full_scale().state_len(), 12160);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adjoint_identity_for_random_states(seed in 0u64..1000, steps in 1usize..6) {
        let m = model(5, 4);
        let x = spun_up(&m, 50, seed);
        let traj = m.linearize(&x, steps).unwrap();
        let mut rng = GaussianRng::new(seed ^ 0xabc);
        let dx = rng.vector(x.len());
        let dy = rng.vector(x.len());
        let gdx = traj.tlm(&dx);
        let gap = (dot(&gdx, &dy) - dot(&dx, &traj.adjoint(&dy))).abs() / (norm2(&gdx) * norm2(&dy));
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn tlm_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let m = model(4, 5);
        let x = spun_up(&m, 30, seed);
        let traj = m.linearize(&x, 3).unwrap();
        let mut rng = GaussianRng::new(seed + 7);
        let (p, q) = (rng.vector(x.len()), rng.vector(x.len()));
        let combo: Vec<f64> = p.iter().zip(&q).map(|(u, v)| a * u + v).collect();
        let lhs = traj.tlm(&combo);
        let (tp, tq) = (traj.tlm(&p), traj.tlm(&q));
        let scale = norm2(&lhs).max(1.0);
        for ((l, u), v) in lhs.iter().zip(&tp).zip(&tq) {
            prop_assert!((l - (a * u + v)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn pack_unpack_round_trip(seed in 0u64..1000, nx in 4usize..9, ny in 4usize..9) {
        let grid = GridSpec::new(nx, ny, 1e6, 1e6).unwrap();
        let data = GaussianRng::new(seed).vector(grid.state_len());
        let x = StateVector::unpack(&data, grid).unwrap();
        prop_assert_eq!(x.pack(), data);
        prop_assert_eq!(x.eta().len() + x.u().len() + x.v().len(), grid.state_len());
    }
}

#[test]
fn viscous_time_step_limit_rejected() {
    let grid = GridSpec::desk();
    let h = grid.dx();
    let p = ModelParams { nu: h * h / (8.0 * 1200.0) * 2.0, ..ModelParams::default() };
    assert!(matches!(p.validate(&grid), Err(Error::Config(_))));
    let p = ModelParams { nu: h * h / (8.0 * 1200.0) * 0.5, ..ModelParams::default() };
    p.validate(&grid).unwrap();
}
