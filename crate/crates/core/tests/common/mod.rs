#![allow(dead_code)]

use da_precond::assim::{BackgroundSigmas, CovarianceModel, FourDVar, ObsOperator};
use da_precond::rng::GaussianRng;
use da_precond::swmodel::{GridSpec, ModelParams, ShallowWater, StateVector};
use nalgebra::DMatrix;

pub fn model(nx: usize, ny: usize) -> ShallowWater {
    let grid = GridSpec::new(nx, ny, 1.8e6, 1.8e6).unwrap();
    ShallowWater::new(grid, ModelParams::default()).unwrap()
}

/// A wind-driven state after a short spin-up, plus small noise so every
/// degree of freedom is active.
pub fn spun_up(m: &ShallowWater, steps: usize, seed: u64) -> StateVector {
    let mut x = m.propagate(&StateVector::zeros(*m.grid()), steps).unwrap();
    let mut rng = GaussianRng::new(seed);
    let (eta, u, v) = x.fields_mut();
    eta.iter_mut().for_each(|e| *e += 1e-2 * rng.standard());
    u.iter_mut().chain(v.iter_mut()).for_each(|w| *w += 1e-3 * rng.standard());
    x
}

/// 4D-Var problem on `m` with identity-like covariances and observations
/// taken from a perturbed truth.
pub fn problem(m: &ShallowWater, window: usize, obs_var: f64, seed: u64) -> (FourDVar, StateVector) {
    let xb = spun_up(m, 200, seed);
    let obs = ObsOperator::eta_only(m.grid());
    let sig = BackgroundSigmas { eta: 1.0, u: 0.5, v: 0.5 };
    let cov = CovarianceModel::per_variable(m.grid(), obs.n_obs(), obs_var, sig, xb.pack()).unwrap();
    let truth = spun_up(m, 200, seed + 1);
    let mut p = FourDVar::new(m.clone(), obs, cov, vec![0.0; m.grid().n_eta()], window).unwrap();
    let y = p.forward(&truth).unwrap();
    p.set_observations(y).unwrap();
    (p, xb)
}

pub fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = GaussianRng::new(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard());
    &g * g.transpose() + DMatrix::identity(n, n) * (n as f64 * 0.1)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
