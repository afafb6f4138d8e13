//! Exact-eigenpair baselines.

use log::warn;
use nalgebra::DMatrix;

use super::EigenpairSet;
use crate::assim::CovarianceModel;
use crate::error::{Error, Result};
use crate::krylov::Lanczos;
use crate::linop::{Diagonal, LinearOperator};

/// Relative residual `||A u - lambda u|| / lambda_1` accepted as converged.
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeadingEigs {
    pub pairs: EigenpairSet,
    /// `||A u_i - lambda_i u_i||_2`, computed explicitly.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Lanczos basis size used (0 for the dense path).
    pub krylov_dim: usize,
}

/// Leading `r` eigenpairs of an SPD operator: dense eigendecomposition when
/// `n <= n_small`, otherwise Lanczos with full reorthogonalization, growing
/// the Krylov space until the pairs converge or it spans the whole space.
pub fn exact_leading_eigs<A: LinearOperator + ?Sized>(
    a: &A,
    r: usize,
    n_small: usize,
) -> Result<LeadingEigs> {
    let n = a.dim();
    if r > n {
        return Err(Error::Config(format!("requested {r} eigenpairs of a {n}-dimensional operator")));
    }
    let (u, values, krylov_dim) = if n <= n_small {
        let eig = a.to_dense().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let u = DMatrix::from_fn(n, r, |i, c| eig.eigenvectors[(i, order[c])]);
        (u, order[..r].iter().map(|&k| eig.eigenvalues[k]).collect::<Vec<_>>(), 0)
    } else {
        let mut lz = Lanczos::new(a, 0x5eed_e165, true);
        let mut m = (2 * r + 20).min(n);
        loop {
            lz.extend_to(m);
            let dec = lz.decomposition();
            let scale = dec.values.first().map_or(1.0, |v| v.abs().max(1.0));
            let ok = dec.residual_estimates[..r].iter().all(|e| *e <= RESIDUAL_TOL * scale);
            if ok || lz.len() >= n || lz.exhausted() {
                let u = dec.vectors.columns(0, r).into_owned();
                break (u, dec.values[..r].to_vec(), lz.len());
            }
            m = (2 * m).min(n);
        }
    };
    let mut pairs = EigenpairSet::from_matrix(&u, values)?;
    pairs.canonicalize_signs();
    let residuals = pairs.residuals(|v| a.apply(v));
    let scale = pairs.values().first().copied().unwrap_or(1.0).max(1.0);
    let converged = residuals.iter().all(|e| *e <= 1e-8 * scale);
    if !converged {
        warn!(
            "leading eigenpairs not converged: worst residual {:e}",
            residuals.iter().fold(0.0f64, |a, b| a.max(*b))
        );
    }
    Ok(LeadingEigs { pairs, residuals, converged, krylov_dim })
}

/// `||A - A_r||_F^2` together with `sum_{i>r} lambda_i^2` for a small dense
/// symmetric matrix; the two agree by the Eckart-Young-Mirsky theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EymCheck {
    pub frobenius_sq: f64,
    pub tail_sum_sq: f64,
    /// `||A||_F^2`; sets the roundoff floor when `r = n`.
    pub total_sq: f64,
}

impl EymCheck {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.frobenius_sq.abs().max(self.tail_sum_sq.abs()).max(f64::EPSILON * self.total_sq);
        if scale == 0.0 {
            0.0
        } else {
            (self.frobenius_sq - self.tail_sum_sq).abs() / scale
        }
    }
}

pub fn eym_residual(a: &DMatrix<f64>, r: usize) -> EymCheck {
    let n = a.nrows();
    assert!(r <= n, "rank {r} exceeds dimension {n}");
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
    let mut a_r = DMatrix::zeros(n, n);
    for &k in &order[..r] {
        let u = eig.eigenvectors.column(k);
        a_r += eig.eigenvalues[k] * u * u.transpose();
    }
    let frobenius_sq = (a - a_r).norm_squared();
    let tail_sum_sq = order[r..].iter().map(|&k| eig.eigenvalues[k].powi(2)).sum();
    EymCheck { frobenius_sq, tail_sum_sq, total_sq: a.norm_squared() }
}

/// Split factor `L = B^{1/2}`, giving `L^T A L = B^{1/2} G^T R^-1 G B^{1/2} + I`.
pub fn b_half_preconditioner(cov: &CovarianceModel) -> Diagonal {
    Diagonal(cov.b_sqrt_diag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseOperator, Identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn identity_gives_unit_values() {
        let e = exact_leading_eigs(&Identity(9), 4, 0).unwrap();
        assert!(e.pairs.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(e.pairs.orthonormality_error() < 1e-12);
        assert!(e.converged);
    }

    #[test]
    fn diagonal_axes_up_to_sign() {
        let a = Diagonal((1..=10).rev().map(f64::from).collect());
        for n_small in [0, 100] {
            let e = exact_leading_eigs(&a, 3, n_small).unwrap();
            assert_eq!(e.pairs.rank(), 3);
            for (i, want) in [10.0, 9.0, 8.0].iter().enumerate() {
                assert!((e.pairs.values()[i] - want).abs() < 1e-10);
                let u = e.pairs.vector(i);
                assert!((u[i] - 1.0).abs() < 1e-8, "canonical sign: {u:?}");
            }
        }
    }

    #[test]
    fn lanczos_residuals_small_on_random_spd() {
        let m = random_spd(40, 3);
        let e = exact_leading_eigs(&DenseOperator(m), 6, 0).unwrap();
        assert!(e.residuals.iter().all(|r| *r <= 1e-8), "{:?}", e.residuals);
    }

    #[test]
    fn eym_edge_ranks() {
        let m = random_spd(12, 4);
        assert!(eym_residual(&m, 12).frobenius_sq < 1e-20);
        let full = eym_residual(&m, 0);
        assert!((full.frobenius_sq - m.norm_squared()).abs() < 1e-10 * m.norm_squared());
        assert!(full.relative_gap() < 1e-12);
    }

    #[test]
    fn too_many_pairs_rejected() {
        assert!(exact_leading_eigs(&Identity(3), 4, 0).is_err());
    }
}
