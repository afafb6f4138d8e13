use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swmodel::GridSpec;

/// Background standard deviations per prognostic variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSigmas {
    pub eta: f64,
    pub u: f64,
    pub v: f64,
}

/// Diagonal `R` and `B` with the background state `x^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    obs_var: Vec<f64>,
    bg_var: Vec<f64>,
    background: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(obs_var: Vec<f64>, bg_var: Vec<f64>, background: Vec<f64>) -> Result<Self> {
        if bg_var.len() != background.len() {
            return Err(Error::Shape(format!(
                "background variance length {} != state length {}",
                bg_var.len(),
                background.len()
            )));
        }
        if let Some(v) = obs_var.iter().chain(&bg_var).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("variances must be positive and finite, got {v}")));
        }
        Ok(Self { obs_var, bg_var, background })
    }

    /// `R = obs_var I_p`, `B` from per-variable sigmas.
    pub fn per_variable(
        grid: &GridSpec,
        n_obs: usize,
        obs_var: f64,
        sigmas: BackgroundSigmas,
        background: Vec<f64>,
    ) -> Result<Self> {
        let mut bg_var = Vec::with_capacity(grid.state_len());
        bg_var.extend(std::iter::repeat(sigmas.eta * sigmas.eta).take(grid.n_eta()));
        bg_var.extend(std::iter::repeat(sigmas.u * sigmas.u).take(grid.n_u()));
        bg_var.extend(std::iter::repeat(sigmas.v * sigmas.v).take(grid.n_v()));
        Self::new(vec![obs_var; n_obs], bg_var, background)
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn obs_var(&self) -> &[f64] {
        &self.obs_var
    }

    pub fn bg_var(&self) -> &[f64] {
        &self.bg_var
    }

    pub fn r_inv_apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.obs_var).map(|(a, v)| a / v).collect()
    }

    pub fn b_inv_apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bg_var).map(|(a, v)| a / v).collect()
    }

    pub fn b_sqrt_diag(&self) -> Vec<f64> {
        self.bg_var.iter().map(|v| v.sqrt()).collect()
    }

    pub fn b_inv_sqrt_diag(&self) -> Vec<f64> {
        self.bg_var.iter().map(|v| 1.0 / v.sqrt()).collect()
    }

    pub fn min_b_inv(&self) -> f64 {
        self.bg_var.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_variance() {
        assert!(CovarianceModel::new(vec![1.0, 0.0], vec![1.0], vec![0.0]).is_err());
        assert!(CovarianceModel::new(vec![1.0], vec![-1.0], vec![0.0]).is_err());
        assert!(CovarianceModel::new(vec![1.0], vec![1.0, 2.0], vec![0.0]).is_err());
    }

    #[test]
    fn square_roots_compose() {
        let c = CovarianceModel::new(vec![2.0], vec![4.0, 0.25], vec![0.0, 0.0]).unwrap();
        let s = c.b_sqrt_diag();
        let si = c.b_inv_sqrt_diag();
        assert_eq!(s, vec![2.0, 0.5]);
        assert_eq!(si, vec![0.5, 2.0]);
        assert_eq!(c.b_inv_apply(&[4.0, 1.0]), vec![1.0, 4.0]);
        assert_eq!(c.r_inv_apply(&[3.0]), vec![1.5]);
        assert_eq!(c.min_b_inv(), 0.25);
    }
}
