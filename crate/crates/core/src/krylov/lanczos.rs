//! Symmetric Lanczos with full reorthogonalization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::ConditionEstimate;
use crate::linop::{axpy, dot, norm2, LinearOperator};

/// Relative size of `beta` below which the Krylov space is taken as invariant.
const BREAKDOWN_TOL: f64 = 1e-12;

/// Incrementally built Lanczos factorization `A V = V T + beta v e^T`.
pub struct Lanczos<'a, A: ?Sized> {
    op: &'a A,
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Unnormalized next residual `w` and its norm.
    next: Option<(Vec<f64>, f64)>,
    restart: bool,
    rng: ChaCha8Rng,
    /// Number of invariant subspaces hit.
    pub breakdowns: usize,
    exhausted: bool,
}

/// Ritz pairs of a Lanczos factorization, values descending.
#[derive(Debug, Clone)]
pub struct LanczosDecomposition {
    pub values: Vec<f64>,
    /// Ritz vectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
    /// `|beta_m * s_{m,i}|`, the Lanczos residual estimate of each pair.
    pub residual_estimates: Vec<f64>,
}

impl<'a, A: LinearOperator + ?Sized> Lanczos<'a, A> {
    /// Starts from a seeded random vector. With `restart`, a breakdown is
    /// continued from a fresh vector orthogonal to the current basis.
    pub fn new(op: &'a A, seed: u64, restart: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = op.dim();
        let v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = norm2(&v0);
        Self {
            op,
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            next: Some((v0, nrm)),
            restart,
            rng,
            breakdowns: 0,
            exhausted: false,
        }
    }

    pub fn with_start(op: &'a A, start: &[f64], restart: bool) -> Self {
        let mut s = Self::new(op, 0, restart);
        s.next = Some((start.to_vec(), norm2(start)));
        s
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// True once no further basis vector can be produced.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    fn orthogonalize(&self, w: &mut [f64]) {
        for _ in 0..2 {
            for q in &self.basis {
                let c = dot(q, w);
                axpy(-c, q, w);
            }
        }
    }

    fn fresh_vector(&mut self) -> Option<(Vec<f64>, f64)> {
        let n = self.op.dim();
        for _ in 0..5 {
            let mut w: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            self.orthogonalize(&mut w);
            let nrm = norm2(&w);
            if nrm > 1e-8 {
                return Some((w, nrm));
            }
        }
        None
    }

    /// Extends the basis to `m` vectors (or fewer when exhausted).
    pub fn extend_to(&mut self, m: usize) {
        let n = self.op.dim();
        let m = m.min(n);
        let mut av = vec![0.0; n];
        while self.basis.len() < m && !self.exhausted {
            let (w, nrm) = match self.next.take() {
                Some(x) => x,
                None => {
                    self.exhausted = true;
                    break;
                }
            };
            let v: Vec<f64> = w.iter().map(|x| x / nrm).collect();
            self.op.apply_into(&v, &mut av);
            let a = dot(&v, &av);
            let mut r = av.clone();
            axpy(-a, &v, &mut r);
            if let (Some(prev), Some(&b)) = (self.basis.last(), self.beta.last()) {
                axpy(-b, prev, &mut r);
            }
            self.basis.push(v);
            self.alpha.push(a);
            self.orthogonalize(&mut r);
            let b = norm2(&r);
            let scale = self.alpha.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(f64::MIN_POSITIVE);
            if self.basis.len() == n {
                self.exhausted = true;
                break;
            }
            if b <= BREAKDOWN_TOL * scale {
                self.breakdowns += 1;
                if self.restart {
                    self.beta.push(0.0);
                    self.next = self.fresh_vector();
                } else {
                    self.exhausted = true;
                }
            } else {
                self.beta.push(b);
                self.next = Some((r, b));
            }
        }
    }

    /// Eigen-decomposition of the current tridiagonal matrix.
    pub fn decomposition(&self) -> LanczosDecomposition {
        let m = self.basis.len();
        let n = self.op.dim();
        if m == 0 {
            return LanczosDecomposition {
                values: vec![],
                vectors: DMatrix::zeros(n, 0),
                residual_estimates: vec![],
            };
        }
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // Coupling to the next (not yet generated) vector.
        let tail = if self.exhausted { 0.0 } else { self.next.as_ref().map_or(0.0, |x| x.1) };
        let mut vectors = DMatrix::zeros(n, m);
        let mut values = Vec::with_capacity(m);
        let mut residual_estimates = Vec::with_capacity(m);
        for (c, &k) in order.iter().enumerate() {
            values.push(eig.eigenvalues[k]);
            let s: DVector<f64> = eig.eigenvectors.column(k).into_owned();
            residual_estimates.push((tail * s[m - 1]).abs());
            let mut col = vec![0.0; n];
            for (q, &sq) in self.basis.iter().zip(s.iter()) {
                axpy(sq, q, &mut col);
            }
            vectors.column_mut(c).copy_from_slice(&col);
        }
        LanczosDecomposition { values, vectors, residual_estimates }
    }
}

/// Ritz estimates of the extreme eigenvalues of an SPD operator after up to
/// `iters` Lanczos steps.
pub fn lanczos_extreme_eigs<A: LinearOperator + ?Sized>(a: &A, iters: usize) -> ConditionEstimate {
    let mut lz = Lanczos::new(a, 0x1a2c_0501, false);
    lz.extend_to(iters.max(1));
    let dec = lz.decomposition();
    let complete = lz.len() == a.dim() || lz.breakdowns == 0;
    ConditionEstimate::new(dec.values[0], *dec.values.last().unwrap(), lz.len(), complete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseOperator, Diagonal, Identity};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_estimates() {
        let c = lanczos_extreme_eigs(&Identity(20), 10);
        assert!((c.lambda_max - 1.0).abs() < 1e-14);
        assert!((c.lambda_min - 1.0).abs() < 1e-14);
        assert!(c.kappa >= 1.0 && c.kappa < 1.0 + 1e-13);
        // One step spans an invariant subspace; that is flagged.
        assert!(!c.complete);
    }

    #[test]
    fn diagonal_known_spectrum() {
        let a = Diagonal((1..=50).map(f64::from).collect());
        let c = lanczos_extreme_eigs(&a, 50);
        assert!((c.lambda_max - 50.0).abs() <= 1e-8);
        assert!((c.lambda_min - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn ritz_values_bracketed_by_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DMatrix::from_fn(30, 30, |_, _| rng.gen_range(-1.0..1.0));
        let m = &g * g.transpose() + DMatrix::identity(30, 30) * 0.1;
        let exact = m.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (exact.min(), exact.max());
        for iters in [5, 12, 30] {
            let c = lanczos_extreme_eigs(&DenseOperator(m.clone()), iters);
            assert!(c.lambda_max <= hi * (1.0 + 1e-12) && c.lambda_min >= lo * (1.0 - 1e-10));
        }
        let c = lanczos_extreme_eigs(&DenseOperator(m), 30);
        assert!((c.lambda_max - hi).abs() < 1e-9 * hi);
        assert!((c.lambda_min - lo).abs() < 1e-9 * hi);
    }

    #[test]
    fn restart_spans_whole_space_for_identity() {
        let id = Identity(7);
        let mut lz = Lanczos::new(&id, 1, true);
        lz.extend_to(7);
        assert_eq!(lz.len(), 7);
        let d = lz.decomposition();
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let vtv = d.vectors.transpose() * &d.vectors;
        assert!((vtv - DMatrix::<f64>::identity(7, 7)).amax() < 1e-12);
    }
}
