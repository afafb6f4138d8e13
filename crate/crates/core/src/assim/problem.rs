//! Cost, gradient and Gauss-Newton system of
//! `J(x) = 1/2 ||H(M(x)) - y||^2_{R^-1} + 1/2 ||x - x^b||^2_{B^-1}`.

use super::{CovarianceModel, ObsOperator};
use crate::error::{Error, Result};
use crate::linop::{dot, LinearOperator};
use crate::swmodel::{ShallowWater, StateVector, Trajectory};

#[derive(Debug, Clone)]
pub struct FourDVar {
    model: ShallowWater,
    obs: ObsOperator,
    cov: CovarianceModel,
    y: Vec<f64>,
    window_steps: usize,
}

impl FourDVar {
    pub fn new(
        model: ShallowWater,
        obs: ObsOperator,
        cov: CovarianceModel,
        y: Vec<f64>,
        window_steps: usize,
    ) -> Result<Self> {
        let n = model.state_len();
        if obs.n_state() != n || cov.background().len() != n {
            return Err(Error::Shape("operator, background and model disagree on n".into()));
        }
        if y.len() != obs.n_obs() || cov.obs_var().len() != obs.n_obs() {
            return Err(Error::Shape(format!(
                "observation vector of length {} for {} observed entries",
                y.len(),
                obs.n_obs()
            )));
        }
        Ok(Self { model, obs, cov, y, window_steps })
    }

    pub fn model(&self) -> &ShallowWater {
        &self.model
    }

    pub fn obs(&self) -> &ObsOperator {
        &self.obs
    }

    pub fn cov(&self) -> &CovarianceModel {
        &self.cov
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn window_steps(&self) -> usize {
        self.window_steps
    }

    pub fn n(&self) -> usize {
        self.model.state_len()
    }

    /// Replaces the observation vector, keeping everything else.
    pub fn set_observations(&mut self, y: Vec<f64>) -> Result<()> {
        if y.len() != self.obs.n_obs() {
            return Err(Error::Shape("observation length".into()));
        }
        self.y = y;
        Ok(())
    }

    /// `G(x) = H(M(x))`
    pub fn forward(&self, x: &StateVector) -> Result<Vec<f64>> {
        let xt = self.model.propagate(x, self.window_steps)?;
        Ok(self.obs.apply(xt.as_slice()))
    }

    fn misfits(&self, x: &StateVector, gx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d: Vec<f64> = gx.iter().zip(&self.y).map(|(a, b)| a - b).collect();
        let dxb: Vec<f64> =
            x.as_slice().iter().zip(self.cov.background()).map(|(a, b)| a - b).collect();
        (d, dxb)
    }

    pub fn cost(&self, x: &StateVector) -> Result<f64> {
        let gx = self.forward(x)?;
        let (d, dxb) = self.misfits(x, &gx);
        Ok(0.5 * dot(&d, &self.cov.r_inv_apply(&d)) + 0.5 * dot(&dxb, &self.cov.b_inv_apply(&dxb)))
    }

    /// `G_x^T R^-1 (G(x) - y) + B^-1 (x - x^b)`
    pub fn grad_cost(&self, x: &StateVector) -> Result<Vec<f64>> {
        let traj = self.model.linearize(x, self.window_steps)?;
        let gx = self.obs.apply(traj.final_state());
        let (d, dxb) = self.misfits(x, &gx);
        let mut g = traj.adjoint(&self.obs.apply_transpose(&self.cov.r_inv_apply(&d)));
        for (gi, bi) in g.iter_mut().zip(self.cov.b_inv_apply(&dxb)) {
            *gi += bi;
        }
        Ok(g)
    }

    /// Linearizes at `x` and assembles the matrix-free system `A_x dx = b_x`.
    pub fn build_gn_system(&self, x: &StateVector) -> Result<GaussNewtonSystem<'_>> {
        let traj = self.model.linearize(x, self.window_steps)?;
        let gx = self.obs.apply(traj.final_state());
        let (d, dxb) = self.misfits(x, &gx);
        let mut rhs = traj.adjoint(&self.obs.apply_transpose(&self.cov.r_inv_apply(&d)));
        for (ri, bi) in rhs.iter_mut().zip(self.cov.b_inv_apply(&dxb)) {
            *ri = -*ri - bi;
        }
        let cost = 0.5 * dot(&d, &self.cov.r_inv_apply(&d)) + 0.5 * dot(&dxb, &self.cov.b_inv_apply(&dxb));
        Ok(GaussNewtonSystem { problem: self, x: x.clone(), traj, departures: d, rhs, cost })
    }
}

/// `A_x = G_x^T R^-1 G_x + B^-1` at a fixed linearization point, applied
/// matrix-free through one tangent-linear and one adjoint sweep.
#[derive(Debug, Clone)]
pub struct GaussNewtonSystem<'p> {
    problem: &'p FourDVar,
    x: StateVector,
    traj: Trajectory<'p>,
    departures: Vec<f64>,
    rhs: Vec<f64>,
    cost: f64,
}

impl<'p> GaussNewtonSystem<'p> {
    pub fn linearization_point(&self) -> &StateVector {
        &self.x
    }

    /// `b_x = -G_x^T R^-1 d - B^-1 (x - x^b)`
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `d = G(x) - y`
    pub fn departures(&self) -> &[f64] {
        &self.departures
    }

    /// `J(x)`, available from the linearization run.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn problem(&self) -> &'p FourDVar {
        self.problem
    }

    /// `G_x v`
    pub fn g_apply(&self, v: &[f64]) -> Vec<f64> {
        self.problem.obs.apply(&self.traj.tlm(v))
    }

    /// `G_x^T w`
    pub fn g_transpose_apply(&self, w: &[f64]) -> Vec<f64> {
        self.traj.adjoint(&self.problem.obs.apply_transpose(w))
    }
}

impl LinearOperator for GaussNewtonSystem<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let cov = &self.problem.cov;
        let gv = self.g_apply(v);
        let gtg = self.g_transpose_apply(&cov.r_inv_apply(&gv));
        for ((o, a), (vi, var)) in out.iter_mut().zip(gtg).zip(v.iter().zip(cov.bg_var())) {
            *o = a + vi / var;
        }
    }
}
