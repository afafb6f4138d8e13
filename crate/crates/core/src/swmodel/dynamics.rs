//! Forward-backward time stepping with its exact tangent-linear and adjoint.
//!
//! One step, with `h = eta0 + eta`:
//!
//! ```text
//! eta1 = eta - dt * div(avg_u(h) u, avg_v(h) v)
//! u1   = u + dt * ( avg(xi) avg(v)  - dB/dx  + nu lap(u) - cb u + tau_x / (rho0 eta0) )
//! v1   = v + dt * (-avg(xi') avg(u1) - dB'/dy + nu lap(v) - cb v )
//! ```
//!
//! where `xi = f + curl(u, v)` is the absolute vorticity at cell corners and
//! `B = g eta1 + (u^2 + v^2) / 2` the Bernoulli function at cell centres. The
//! v update sees the freshly updated `u1` (`xi' = f + curl(u1, v)`), which keeps
//! the Coriolis terms neutrally stable under explicit stepping.

use super::stencil::Stencil;
use super::{GridSpec, ModelParams, StateVector};
use crate::error::{Error, Result};

/// Intermediates of one forward step, consumed by the tangent-linear and
/// adjoint sweeps.
#[derive(Debug, Clone)]
pub struct StepTape {
    u: Vec<f64>,
    v: Vec<f64>,
    h_u: Vec<f64>,
    h_v: Vec<f64>,
    xi_u: Vec<f64>,
    v_u: Vec<f64>,
    u1: Vec<f64>,
    xi_v: Vec<f64>,
    u_v: Vec<f64>,
}

/// Shallow-water model bound to a grid and parameter set.
#[derive(Debug, Clone)]
pub struct ShallowWater {
    grid: GridSpec,
    params: ModelParams,
    st: Stencil,
    /// Coriolis parameter at corners.
    f_q: Vec<f64>,
    /// Wind acceleration `tau_x / (rho0 eta0)` at u faces.
    wind_u: Vec<f64>,
}

impl ShallowWater {
    pub fn new(grid: GridSpec, params: ModelParams) -> Result<Self> {
        grid.validate()?;
        params.validate(&grid)?;
        let st = Stencil { nx: grid.nx, ny: grid.ny, dx: grid.dx(), dy: grid.dy() };
        let mut f_q = vec![0.0; st.n_q()];
        for i in 0..=grid.nx {
            for j in 0..=grid.ny {
                f_q[st.q(i, j)] = params.f0 + params.beta * (j as f64 * st.dy);
            }
        }
        let mut wind_u = vec![0.0; st.n_u()];
        let two_pi = 2.0 * std::f64::consts::PI;
        for i in 0..grid.nx - 1 {
            for j in 0..grid.ny {
                let y = (j as f64 + 0.5) * st.dy;
                wind_u[st.u(i, j)] =
                    params.tau0 * (two_pi * y / grid.ly).cos() / (params.rho0 * params.eta0);
            }
        }
        Ok(Self { grid, params, st, f_q, wind_u })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state_len(&self) -> usize {
        self.grid.state_len()
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (eta, rest) = x.split_at(self.st.n_c());
        let (u, v) = rest.split_at(self.st.n_u());
        (eta, u, v)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_len() {
            return Err(Error::Shape(format!(
                "expected state of length {}, got {}",
                self.state_len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Bernoulli function `g eta + (avg(u^2) + avg(v^2)) / 2`.
    fn bernoulli(&self, eta: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let st = &self.st;
        let u2: Vec<f64> = u.iter().map(|a| a * a).collect();
        let v2: Vec<f64> = v.iter().map(|a| a * a).collect();
        let mut ku = vec![0.0; st.n_c()];
        let mut kv = vec![0.0; st.n_c()];
        st.u_to_c(&u2, &mut ku);
        st.v_to_c(&v2, &mut kv);
        eta.iter()
            .zip(ku.iter().zip(&kv))
            .map(|(e, (a, b))| self.params.g * e + 0.5 * (a + b))
            .collect()
    }

    fn absolute_vorticity(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.st.n_q()];
        self.st.curl(u, v, &mut xi);
        xi.iter_mut().zip(&self.f_q).for_each(|(z, f)| *z += f);
        xi
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, StepTape) {
        let st = &self.st;
        let p = &self.params;
        let dt = p.dt;
        let (eta, u, v) = self.split(x);

        let h: Vec<f64> = eta.iter().map(|e| p.eta0 + e).collect();
        let mut h_u = vec![0.0; st.n_u()];
        let mut h_v = vec![0.0; st.n_v()];
        st.c_to_u(&h, &mut h_u);
        st.c_to_v(&h, &mut h_v);
        let flux_u: Vec<f64> = h_u.iter().zip(u).map(|(a, b)| a * b).collect();
        let flux_v: Vec<f64> = h_v.iter().zip(v).map(|(a, b)| a * b).collect();
        let mut div = vec![0.0; st.n_c()];
        st.div(&flux_u, &flux_v, &mut div);
        let eta1: Vec<f64> = eta.iter().zip(&div).map(|(e, d)| e - dt * d).collect();

        let xi = self.absolute_vorticity(u, v);
        let b = self.bernoulli(&eta1, u, v);
        let mut xi_u = vec![0.0; st.n_u()];
        let mut v_u = vec![0.0; st.n_u()];
        let mut db = vec![0.0; st.n_u()];
        let mut lap = vec![0.0; st.n_u()];
        st.q_to_u(&xi, &mut xi_u);
        st.v_to_u(v, &mut v_u);
        st.grad_x(&b, &mut db);
        st.lap_u(u, &mut lap);
        let u1: Vec<f64> = (0..st.n_u())
            .map(|k| {
                u[k] + dt
                    * (xi_u[k] * v_u[k] - db[k] + p.nu * lap[k] - p.cb * u[k] + self.wind_u[k])
            })
            .collect();

        let xi2 = self.absolute_vorticity(&u1, v);
        let b2 = self.bernoulli(&eta1, &u1, v);
        let mut xi_v = vec![0.0; st.n_v()];
        let mut u_v = vec![0.0; st.n_v()];
        let mut db2 = vec![0.0; st.n_v()];
        let mut lap_v = vec![0.0; st.n_v()];
        st.q_to_v(&xi2, &mut xi_v);
        st.u_to_v(&u1, &mut u_v);
        st.grad_y(&b2, &mut db2);
        st.lap_v(v, &mut lap_v);
        let v1: Vec<f64> = (0..st.n_v())
            .map(|k| v[k] + dt * (-xi_v[k] * u_v[k] - db2[k] + p.nu * lap_v[k] - p.cb * v[k]))
            .collect();

        let mut out = eta1;
        out.extend_from_slice(&u1);
        out.extend_from_slice(&v1);
        let tape = StepTape {
            u: u.to_vec(),
            v: v.to_vec(),
            h_u,
            h_v,
            xi_u,
            v_u,
            u1,
            xi_v,
            u_v,
        };
        (out, tape)
    }

    /// One explicit time step.
    pub fn step(&self, x: &StateVector) -> Result<StateVector> {
        self.check_len(x.as_slice())?;
        let (next, _) = self.forward(x.as_slice());
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { step: 0 });
        }
        StateVector::from_vec(next, self.grid)
    }

    /// `n_steps` applications of [`step`](Self::step).
    pub fn propagate(&self, x: &StateVector, n_steps: usize) -> Result<StateVector> {
        self.check_len(x.as_slice())?;
        let mut cur = x.as_slice().to_vec();
        for k in 0..n_steps {
            let (next, _) = self.forward(&cur);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { step: k });
            }
            cur = next;
        }
        StateVector::from_vec(cur, self.grid)
    }

    /// Runs the model from `x` and records every step for linearized sweeps.
    pub fn linearize(&self, x: &StateVector, n_steps: usize) -> Result<Trajectory<'_>> {
        self.check_len(x.as_slice())?;
        let mut tapes = Vec::with_capacity(n_steps);
        let mut cur = x.as_slice().to_vec();
        for k in 0..n_steps {
            let (next, tape) = self.forward(&cur);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { step: k });
            }
            tapes.push(tape);
            cur = next;
        }
        Ok(Trajectory { model: self, tapes, final_state: cur })
    }

    /// Jacobian-vector product of [`propagate`](Self::propagate) at `x_lin`.
    pub fn tlm_apply(
        &self,
        x_lin: &StateVector,
        dx: &StateVector,
        n_steps: usize,
    ) -> Result<StateVector> {
        let traj = self.linearize(x_lin, n_steps)?;
        StateVector::from_vec(traj.tlm(dx.as_slice()), self.grid)
    }

    /// Transpose of [`tlm_apply`](Self::tlm_apply).
    pub fn adjoint_apply(
        &self,
        x_lin: &StateVector,
        dy: &StateVector,
        n_steps: usize,
    ) -> Result<StateVector> {
        let traj = self.linearize(x_lin, n_steps)?;
        StateVector::from_vec(traj.adjoint(dy.as_slice()), self.grid)
    }

    fn tlm_step(&self, t: &StepTape, dx: &[f64]) -> Vec<f64> {
        let st = &self.st;
        let p = &self.params;
        let dt = p.dt;
        let (deta, du, dv) = self.split(dx);

        let mut dh_u = vec![0.0; st.n_u()];
        let mut dh_v = vec![0.0; st.n_v()];
        st.c_to_u(deta, &mut dh_u);
        st.c_to_v(deta, &mut dh_v);
        let dflux_u: Vec<f64> =
            (0..st.n_u()).map(|k| dh_u[k] * t.u[k] + t.h_u[k] * du[k]).collect();
        let dflux_v: Vec<f64> =
            (0..st.n_v()).map(|k| dh_v[k] * t.v[k] + t.h_v[k] * dv[k]).collect();
        let mut ddiv = vec![0.0; st.n_c()];
        st.div(&dflux_u, &dflux_v, &mut ddiv);
        let deta1: Vec<f64> = deta.iter().zip(&ddiv).map(|(e, d)| e - dt * d).collect();

        // u update
        let mut dzeta = vec![0.0; st.n_q()];
        st.curl(du, dv, &mut dzeta);
        let db = self.bernoulli_tlm(&deta1, &t.u, du, &t.v, dv);
        let mut dxi_u = vec![0.0; st.n_u()];
        let mut dv_u = vec![0.0; st.n_u()];
        let mut ddb = vec![0.0; st.n_u()];
        let mut lap = vec![0.0; st.n_u()];
        st.q_to_u(&dzeta, &mut dxi_u);
        st.v_to_u(dv, &mut dv_u);
        st.grad_x(&db, &mut ddb);
        st.lap_u(du, &mut lap);
        let du1: Vec<f64> = (0..st.n_u())
            .map(|k| {
                du[k] + dt
                    * (dxi_u[k] * t.v_u[k] + t.xi_u[k] * dv_u[k] - ddb[k] + p.nu * lap[k]
                        - p.cb * du[k])
            })
            .collect();

        // v update
        let mut dzeta2 = vec![0.0; st.n_q()];
        st.curl(&du1, dv, &mut dzeta2);
        let db2 = self.bernoulli_tlm(&deta1, &t.u1, &du1, &t.v, dv);
        let mut dxi_v = vec![0.0; st.n_v()];
        let mut du_v = vec![0.0; st.n_v()];
        let mut ddb2 = vec![0.0; st.n_v()];
        let mut lap_v = vec![0.0; st.n_v()];
        st.q_to_v(&dzeta2, &mut dxi_v);
        st.u_to_v(&du1, &mut du_v);
        st.grad_y(&db2, &mut ddb2);
        st.lap_v(dv, &mut lap_v);
        let dv1: Vec<f64> = (0..st.n_v())
            .map(|k| {
                dv[k] + dt
                    * (-dxi_v[k] * t.u_v[k] - t.xi_v[k] * du_v[k] - ddb2[k] + p.nu * lap_v[k]
                        - p.cb * dv[k])
            })
            .collect();

        let mut out = deta1;
        out.extend_from_slice(&du1);
        out.extend_from_slice(&dv1);
        out
    }

    fn bernoulli_tlm(&self, deta: &[f64], u: &[f64], du: &[f64], v: &[f64], dv: &[f64]) -> Vec<f64> {
        let st = &self.st;
        let wu: Vec<f64> = u.iter().zip(du).map(|(a, b)| a * b).collect();
        let wv: Vec<f64> = v.iter().zip(dv).map(|(a, b)| a * b).collect();
        let mut ku = vec![0.0; st.n_c()];
        let mut kv = vec![0.0; st.n_c()];
        st.u_to_c(&wu, &mut ku);
        st.v_to_c(&wv, &mut kv);
        (0..st.n_c()).map(|k| self.params.g * deta[k] + ku[k] + kv[k]).collect()
    }

    /// Reverse of [`bernoulli_tlm`](Self::bernoulli_tlm): accumulates into
    /// `a_eta`, `a_u`, `a_v`.
    fn bernoulli_adj(
        &self,
        a_b: &[f64],
        u: &[f64],
        v: &[f64],
        a_eta: &mut [f64],
        a_u: &mut [f64],
        a_v: &mut [f64],
    ) {
        let st = &self.st;
        for (ae, ab) in a_eta.iter_mut().zip(a_b) {
            *ae += self.params.g * ab;
        }
        let mut wu = vec![0.0; st.n_u()];
        let mut wv = vec![0.0; st.n_v()];
        st.u_to_c_t(a_b, &mut wu);
        st.v_to_c_t(a_b, &mut wv);
        for k in 0..st.n_u() {
            a_u[k] += u[k] * wu[k];
        }
        for k in 0..st.n_v() {
            a_v[k] += v[k] * wv[k];
        }
    }

    fn adjoint_step(&self, t: &StepTape, lambda: &[f64]) -> Vec<f64> {
        let st = &self.st;
        let p = &self.params;
        let dt = p.dt;
        let (l_eta1, l_u1, l_v1) = self.split(lambda);

        let mut a_eta = vec![0.0; st.n_c()];
        let mut a_u = vec![0.0; st.n_u()];
        let mut a_v = vec![0.0; st.n_v()];
        let mut a_eta1 = l_eta1.to_vec();
        let mut a_u1 = l_u1.to_vec();

        // v update
        let gv = l_v1;
        for k in 0..st.n_v() {
            a_v[k] += gv[k] * (1.0 - dt * p.cb);
        }
        let nu_g: Vec<f64> = gv.iter().map(|g| dt * p.nu * g).collect();
        st.lap_v_t(&nu_g, &mut a_v);
        let t1: Vec<f64> = (0..st.n_v()).map(|k| -dt * gv[k] * t.u_v[k]).collect();
        let mut a_zeta2 = vec![0.0; st.n_q()];
        st.q_to_v_t(&t1, &mut a_zeta2);
        let t2: Vec<f64> = (0..st.n_v()).map(|k| -dt * gv[k] * t.xi_v[k]).collect();
        st.u_to_v_t(&t2, &mut a_u1);
        let mg: Vec<f64> = gv.iter().map(|g| -dt * g).collect();
        let mut a_b2 = vec![0.0; st.n_c()];
        st.grad_y_t(&mg, &mut a_b2);
        self.bernoulli_adj(&a_b2, &t.u1, &t.v, &mut a_eta1, &mut a_u1, &mut a_v);
        st.curl_t(&a_zeta2, &mut a_u1, &mut a_v);

        // u update
        let gu = &a_u1;
        for k in 0..st.n_u() {
            a_u[k] += gu[k] * (1.0 - dt * p.cb);
        }
        let nu_g: Vec<f64> = gu.iter().map(|g| dt * p.nu * g).collect();
        st.lap_u_t(&nu_g, &mut a_u);
        let t1: Vec<f64> = (0..st.n_u()).map(|k| dt * gu[k] * t.v_u[k]).collect();
        let mut a_zeta = vec![0.0; st.n_q()];
        st.q_to_u_t(&t1, &mut a_zeta);
        let t2: Vec<f64> = (0..st.n_u()).map(|k| dt * gu[k] * t.xi_u[k]).collect();
        st.v_to_u_t(&t2, &mut a_v);
        let mg: Vec<f64> = gu.iter().map(|g| -dt * g).collect();
        let mut a_b = vec![0.0; st.n_c()];
        st.grad_x_t(&mg, &mut a_b);
        self.bernoulli_adj(&a_b, &t.u, &t.v, &mut a_eta1, &mut a_u, &mut a_v);
        st.curl_t(&a_zeta, &mut a_u, &mut a_v);

        // continuity
        for k in 0..st.n_c() {
            a_eta[k] += a_eta1[k];
        }
        let mg: Vec<f64> = a_eta1.iter().map(|g| -dt * g).collect();
        let mut a_fu = vec![0.0; st.n_u()];
        let mut a_fv = vec![0.0; st.n_v()];
        st.div_t(&mg, &mut a_fu, &mut a_fv);
        let a_hu: Vec<f64> = (0..st.n_u()).map(|k| a_fu[k] * t.u[k]).collect();
        let a_hv: Vec<f64> = (0..st.n_v()).map(|k| a_fv[k] * t.v[k]).collect();
        for k in 0..st.n_u() {
            a_u[k] += a_fu[k] * t.h_u[k];
        }
        for k in 0..st.n_v() {
            a_v[k] += a_fv[k] * t.h_v[k];
        }
        st.c_to_u_t(&a_hu, &mut a_eta);
        st.c_to_v_t(&a_hv, &mut a_eta);

        let mut out = a_eta;
        out.extend_from_slice(&a_u);
        out.extend_from_slice(&a_v);
        out
    }
}

/// A stored forward run, reusable for any number of TLM/adjoint sweeps.
#[derive(Debug, Clone)]
pub struct Trajectory<'m> {
    model: &'m ShallowWater,
    tapes: Vec<StepTape>,
    final_state: Vec<f64>,
}

impl Trajectory<'_> {
    pub fn n_steps(&self) -> usize {
        self.tapes.len()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    /// `M_x dx`
    pub fn tlm(&self, dx: &[f64]) -> Vec<f64> {
        assert_eq!(dx.len(), self.final_state.len(), "perturbation length");
        let mut cur = dx.to_vec();
        for tape in &self.tapes {
            cur = self.model.tlm_step(tape, &cur);
        }
        cur
    }

    /// `M_x^T dy`
    pub fn adjoint(&self, dy: &[f64]) -> Vec<f64> {
        assert_eq!(dy.len(), self.final_state.len(), "adjoint forcing length");
        let mut cur = dy.to_vec();
        for tape in self.tapes.iter().rev() {
            cur = self.model.adjoint_step(tape, &cur);
        }
        cur
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(nx: usize, ny: usize) -> ShallowWater {
        let grid = GridSpec::new(nx, ny, 1.8e6, 1.8e6).unwrap();
        let mut p = ModelParams::default();
        p.dt = 0.9 * p.max_dt(&grid);
        ShallowWater::new(grid, p).unwrap()
    }

    fn random_state(grid: GridSpec, seed: u64, eta_amp: f64, vel_amp: f64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = StateVector::zeros(grid);
        let (eta, u, v) = x.fields_mut();
        eta.iter_mut().for_each(|e| *e = eta_amp * rng.gen_range(-1.0..1.0));
        u.iter_mut().for_each(|e| *e = vel_amp * rng.gen_range(-1.0..1.0));
        v.iter_mut().for_each(|e| *e = vel_amp * rng.gen_range(-1.0..1.0));
        x
    }

    #[test]
    fn unforced_rest_is_stationary() {
        let grid = GridSpec::desk();
        let p = ModelParams { tau0: 0.0, ..ModelParams::default() };
        let model = ShallowWater::new(grid, p).unwrap();
        let x = StateVector::zeros(grid);
        assert_eq!(model.step(&x).unwrap(), x);
        assert_eq!(model.propagate(&x, 25).unwrap(), x);
    }

    #[test]
    fn propagate_zero_steps_is_identity() {
        let model = small_model(6, 5);
        let x = random_state(*model.grid(), 1, 0.5, 0.1);
        assert_eq!(model.propagate(&x, 0).unwrap(), x);
    }

    #[test]
    fn propagate_is_a_semigroup() {
        let model = small_model(6, 5);
        let x = random_state(*model.grid(), 2, 0.5, 0.1);
        let ab = model.propagate(&x, 7).unwrap();
        let a_then_b = model.propagate(&model.propagate(&x, 3).unwrap(), 4).unwrap();
        assert_eq!(ab, a_then_b);
    }

    #[test]
    fn blowup_reports_step() {
        let model = small_model(4, 4);
        let mut x = StateVector::zeros(*model.grid());
        x.as_mut_slice()[0] = f64::NAN;
        assert!(matches!(model.propagate(&x, 3), Err(Error::NumericalBlowup { step: 0 })));
    }

    #[test]
    fn mass_is_conserved_without_forcing_or_dissipation() {
        let grid = GridSpec::desk();
        let p = ModelParams { tau0: 0.0, nu: 0.0, cb: 0.0, ..ModelParams::default() };
        let model = ShallowWater::new(grid, p).unwrap();
        let mut x = random_state(grid, 5, 1.0, 0.2);
        let m0 = x.total_mass(p.eta0);
        for _ in 0..20 {
            x = model.step(&x).unwrap();
            let m = x.total_mass(p.eta0);
            assert!(((m - m0) / m0).abs() <= 1e-10);
        }
    }

    #[test]
    fn tlm_of_zero_is_zero() {
        let model = small_model(5, 5);
        let x = random_state(*model.grid(), 3, 0.5, 0.1);
        let dx = StateVector::zeros(*model.grid());
        let out = model.tlm_apply(&x, &dx, 4).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_zero_steps_is_identity() {
        let model = small_model(5, 5);
        let x = random_state(*model.grid(), 3, 0.5, 0.1);
        let dy = random_state(*model.grid(), 4, 1.0, 1.0);
        assert_eq!(model.adjoint_apply(&x, &dy, 0).unwrap(), dy);
    }

    #[test]
    fn single_step_dot_product() {
        let model = small_model(5, 4);
        let x = random_state(*model.grid(), 9, 0.5, 0.2);
        let traj = model.linearize(&x, 1).unwrap();
        let dx = random_state(*model.grid(), 10, 1.0, 1.0);
        let dy = random_state(*model.grid(), 11, 1.0, 1.0);
        let gdx = traj.tlm(dx.as_slice());
        let gtdy = traj.adjoint(dy.as_slice());
        let l: f64 = gdx.iter().zip(dy.as_slice()).map(|(a, b)| a * b).sum();
        let r: f64 = dx.as_slice().iter().zip(&gtdy).map(|(a, b)| a * b).sum();
        assert!((l - r).abs() <= 1e-13 * l.abs().max(1.0), "{l} vs {r}");
    }
}
