//! Shallow-water dynamics on an Arakawa C-grid.
//!
//! `eta` lives at cell centres, `u` on the interior east/west faces and `v` on
//! the interior north/south faces. Wall-normal velocities are identically zero
//! and are not stored. All fields are stored x-major: `field[i * ny_f + j]`
//! where `i` indexes the x direction.

mod dynamics;
mod io;
mod stencil;

pub use dynamics::{ShallowWater, StepTape, Trajectory};
pub use io::{read_snapshot, to_image, write_snapshot, ChannelScales, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CFL safety factor applied to the gravity-wave speed.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Domain length in x (m).
    pub lx: f64,
    /// Domain length in y (m).
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        let g = Self { nx, ny, lx, ly };
        g.validate()?;
        Ok(g)
    }

    /// The 64x64, 1800 km configuration.
    pub fn full_scale() -> Self {
        Self { nx: 64, ny: 64, lx: 1.8e6, ly: 1.8e6 }
    }

    /// The 16x16 desk configuration on the same domain.
    pub fn desk() -> Self {
        Self { nx: 16, ny: 16, lx: 1.8e6, ly: 1.8e6 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::Config(format!(
                "grid must be at least 4x4, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::Config("domain lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn n_eta(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_u(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    /// Packed state length.
    pub fn state_len(&self) -> usize {
        self.n_eta() + self.n_u() + self.n_v()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Mean layer depth (m).
    pub eta0: f64,
    pub g: f64,
    /// Laplacian viscosity (m^2/s).
    pub nu: f64,
    /// Linear bottom friction (1/s).
    pub cb: f64,
    /// Wind stress amplitude (N/m^2).
    pub tau0: f64,
    pub rho0: f64,
    pub f0: f64,
    pub beta: f64,
    /// Time step (s).
    pub dt: f64,
    pub steps_per_window: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            eta0: 100.0,
            g: 9.81,
            nu: 3.0e5,
            cb: 1e-6,
            tau0: 0.1,
            rho0: 1000.0,
            f0: 1e-4,
            beta: 2e-11,
            dt: 1200.0,
            steps_per_window: 144,
        }
    }
}

impl ModelParams {
    /// Largest admissible time step on `grid`: the gravity-wave CFL bound,
    /// and `h^2 / (8 nu)` for the explicit five-point viscosity.
    pub fn max_dt(&self, grid: &GridSpec) -> f64 {
        let h = grid.dx().min(grid.dy());
        let wave = CFL_LIMIT * h / (self.g * self.eta0).sqrt();
        if self.nu > 0.0 {
            wave.min(h * h / (8.0 * self.nu))
        } else {
            wave
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::Config("eta0 must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.g > 0.0 && self.rho0 > 0.0) {
            return Err(Error::Config("g and rho0 must be positive".into()));
        }
        if !(self.nu >= 0.0 && self.cb >= 0.0) {
            return Err(Error::Config("nu and cb must be non-negative".into()));
        }
        let max_dt = self.max_dt(grid);
        if self.dt > max_dt {
            return Err(Error::Config(format!(
                "dt = {} s exceeds the stability bound {max_dt:.3} s",
                self.dt
            )));
        }
        Ok(())
    }

    /// Length of the assimilation window in seconds.
    pub fn window_seconds(&self) -> f64 {
        self.dt * self.steps_per_window as f64
    }
}

/// Packed `(eta, u, v)` state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: GridSpec,
    data: Vec<f64>,
}

impl StateVector {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { data: vec![0.0; grid.state_len()], grid }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn eta(&self) -> &[f64] {
        &self.data[..self.grid.n_eta()]
    }

    pub fn u(&self) -> &[f64] {
        let a = self.grid.n_eta();
        &self.data[a..a + self.grid.n_u()]
    }

    pub fn v(&self) -> &[f64] {
        &self.data[self.grid.n_eta() + self.grid.n_u()..]
    }

    pub fn fields_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        let (eta, rest) = self.data.split_at_mut(self.grid.n_eta());
        let (u, v) = rest.split_at_mut(self.grid.n_u());
        (eta, u, v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pack(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn unpack(flat: &[f64], grid: GridSpec) -> Result<Self> {
        Self::from_vec(flat.to_vec(), grid)
    }

    pub fn from_vec(data: Vec<f64>, grid: GridSpec) -> Result<Self> {
        if data.len() != grid.state_len() {
            return Err(Error::Shape(format!(
                "state of length {} does not fit a {}x{} grid (expected {})",
                data.len(),
                grid.nx,
                grid.ny,
                grid.state_len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Total mass `sum (eta0 + eta) dx dy`.
    pub fn total_mass(&self, eta0: f64) -> f64 {
        let cell = self.grid.dx() * self.grid.dy();
        self.eta().iter().map(|e| (eta0 + e) * cell).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_state_length() {
        assert_eq!(GridSpec::full_scale().state_len(), 12160);
        assert_eq!(GridSpec::desk().state_len(), 736);
    }

    #[test]
    fn tiny_grid_rejected() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn cfl_violation_rejected() {
        let grid = GridSpec::desk();
        let mut p = ModelParams::default();
        p.validate(&grid).unwrap();
        p.dt = 2.0 * p.max_dt(&grid);
        assert!(matches!(p.validate(&grid), Err(Error::Config(_))));
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let grid = GridSpec::desk();
        let err = StateVector::unpack(&[0.0; 10], grid).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn field_views_partition_state() {
        let grid = GridSpec::new(5, 4, 1.0, 1.0).unwrap();
        let flat: Vec<f64> = (0..grid.state_len()).map(|i| i as f64).collect();
        let x = StateVector::unpack(&flat, grid).unwrap();
        assert_eq!(x.eta().len(), 20);
        assert_eq!(x.u().len(), 16);
        assert_eq!(x.v().len(), 15);
        assert_eq!(x.u()[0], 20.0);
        assert_eq!(x.v()[0], 36.0);
        assert_eq!(x.pack(), flat);
    }
}
