//! Matrix-free symmetric operators.
//!
//! Everything that plays the role of a matrix (the Gauss-Newton operator,
//! covariance factors, preconditioner factors) implements [`LinearOperator`].
//! Dense matrices are used only in tests and small diagnostics.

use nalgebra::DMatrix;

/// A square linear map on `R^n` applied without forming its matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. Both slices have length [`dim`](Self::dim).
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// Applies `A^T`. Defaults to `A`, which is correct for symmetric operators.
    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y)
    }

    /// Assembles the dense matrix column by column. Only for small `n`.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_transpose_into(x, y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_transpose_into(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Diagonal operator `diag(d)`.
#[derive(Debug, Clone)]
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

/// Dense matrix wrapper, mostly for oracles and small examples.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = &self.0;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, aij) in y.iter_mut().zip(m.column(j).iter()) {
                *yi += aij * xj;
            }
        }
    }
    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = dot(self.0.column(j).as_slice(), x);
        }
    }
}

/// Operator defined by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// `L^T A L` for a split preconditioner `L`.
pub struct SplitPreconditioned<'a, A: ?Sized, L: ?Sized> {
    pub a: &'a A,
    pub l: &'a L,
}

impl<A: LinearOperator + ?Sized, L: LinearOperator + ?Sized> LinearOperator
    for SplitPreconditioned<'_, A, L>
{
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        let mut t = vec![0.0; n];
        let mut s = vec![0.0; n];
        self.l.apply_into(x, &mut t);
        self.a.apply_into(&t, &mut s);
        self.l.apply_transpose_into(&s, y);
    }
}

/// Inner product with four interleaved partial sums; the summation order is
/// fixed, so results are reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
