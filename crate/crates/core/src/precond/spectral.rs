use serde::{Deserialize, Serialize};

use super::EigenpairSet;
use crate::error::{Error, Result};
use crate::linop::{axpy, dot, LinearOperator};

/// `P = beta I + U (mu Lambda^alpha - beta I) U^T`, applied with `r` inner
/// products and `r` axpys.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPreconditioner {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pairs: EigenpairSet,
    /// `mu lambda_i^alpha - beta`, cached.
    coeffs: Vec<f64>,
}

impl SpectralPreconditioner {
    pub fn new(pairs: EigenpairSet, alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        if !(beta > 0.0 && mu > 0.0) {
            return Err(Error::Config(format!("beta and mu must be positive (beta={beta}, mu={mu})")));
        }
        let coeffs = pairs.values().iter().map(|l| mu * l.powf(alpha) - beta).collect();
        Ok(Self { alpha, beta, mu, pairs, coeffs })
    }

    pub fn pairs(&self) -> &EigenpairSet {
        &self.pairs
    }

    /// `P_{alpha/2}` with `sqrt(beta)`, `sqrt(mu)`: the symmetric square root.
    pub fn sqrt(&self) -> Self {
        Self::new(self.pairs.clone(), self.alpha / 2.0, self.beta.sqrt(), self.mu.sqrt())
            .expect("square root of valid parameters")
    }

    /// Eigenvalues of `P`: `mu lambda_i^alpha` on `range(U)`, `beta` elsewhere.
    pub fn spectrum_head(&self) -> Vec<f64> {
        self.pairs.values().iter().map(|l| self.mu * l.powf(self.alpha)).collect()
    }
}

impl LinearOperator for SpectralPreconditioner {
    fn dim(&self) -> usize {
        self.pairs.n()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.beta * x;
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            let u = self.pairs.vector(i);
            let w = dot(u, v);
            axpy(c * w, u, out);
        }
    }
}

/// How the head multiplier `mu` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MuPolicy {
    Fixed(f64),
    /// Smallest eigenvalue of the pair set in use.
    MinPredicted,
}

impl MuPolicy {
    /// Resolves `mu` for `values` (descending), clamped to `>= 1`.
    pub fn resolve(&self, values: &[f64]) -> f64 {
        let raw = match *self {
            MuPolicy::Fixed(v) => v,
            MuPolicy::MinPredicted => values.last().copied().unwrap_or(1.0),
        };
        raw.max(1.0)
    }
}

/// Split factor `L` with `L L^T = P_{-1} = I + U (mu Lambda^-1 - I) U^T`.
///
/// `L = I + U (sqrt(mu) Lambda^{-1/2} - I) U^T` is symmetric, so `L^T = L`.
/// With exact eigenpairs, `L^T A L` has the leading `r` eigenvalues moved to
/// `mu` and the rest unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFactor {
    mu: f64,
    half: SpectralPreconditioner,
}

impl SplitFactor {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn pairs(&self) -> &EigenpairSet {
        self.half.pairs()
    }

    /// `P_{-1}` with the same `mu`, equal to `L L^T`.
    pub fn preconditioner(&self) -> SpectralPreconditioner {
        SpectralPreconditioner::new(self.half.pairs().clone(), -1.0, 1.0, self.mu)
            .expect("validated at construction")
    }
}

impl LinearOperator for SplitFactor {
    fn dim(&self) -> usize {
        self.half.dim()
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.half.apply_into(v, out)
    }
}

/// Builds `L` from eigenpairs. Rejects `mu < 1`.
pub fn split_l(pairs: EigenpairSet, mu: f64) -> Result<SplitFactor> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(Error::Config(format!(
            "split preconditioner requires mu >= 1 so that the clustered eigenvalues stay \
             above the unit lower bound of the Gauss-Newton spectrum (got mu = {mu})"
        )));
    }
    let half = SpectralPreconditioner::new(pairs, -0.5, 1.0, mu.sqrt())?;
    Ok(SplitFactor { mu, half })
}
