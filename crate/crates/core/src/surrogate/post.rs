//! Postprocessing of the raw network head: orthonormalization, eigenvalue
//! squashing and joint sorting, each with its reverse-mode derivative.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::{axpy, dot};
use crate::precond::EigenpairSet;

/// Columns with norm below this during Gram-Schmidt are degenerate.
pub const MGS_MIN_NORM: f64 = 1e-12;

/// Projection coefficients and norms recorded by [`mgs`].
#[derive(Debug, Clone)]
pub(crate) struct MgsTape {
    /// `coeffs[j]` holds `2 j` coefficients: first pass then reorthogonalization.
    coeffs: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
pub(crate) fn mgs(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, MgsTape)> {
    let (n, r) = a.shape();
    let mut q = DMatrix::zeros(n, r);
    let mut coeffs = Vec::with_capacity(r);
    let mut norms = Vec::with_capacity(r);
    for j in 0..r {
        let mut v: Vec<f64> = a.column(j).iter().copied().collect();
        let mut cj = Vec::with_capacity(2 * j);
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let qi = qi.as_slice();
                let c = dot(qi, &v);
                axpy(-c, qi, &mut v);
                cj.push(c);
            }
        }
        let rho = dot(&v, &v).sqrt();
        if !(rho >= MGS_MIN_NORM) {
            return Err(Error::DegenerateOutput { column: j, norm: rho });
        }
        for (qv, vv) in q.column_mut(j).iter_mut().zip(&v) {
            *qv = vv / rho;
        }
        coeffs.push(cj);
        norms.push(rho);
    }
    Ok((q, MgsTape { coeffs, norms }))
}

/// Pulls `q_bar` back through [`mgs`]. Intermediate vectors are rebuilt from
/// the recorded coefficients instead of being stored.
pub(crate) fn mgs_backward(q: &DMatrix<f64>, tape: &MgsTape, q_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = q.shape();
    let mut qb = q_bar.clone();
    let mut a_bar = DMatrix::zeros(n, r);
    for j in (0..r).rev() {
        let qj: Vec<f64> = q.column(j).iter().copied().collect();
        let rho = tape.norms[j];
        let g: Vec<f64> = qb.column(j).iter().copied().collect();
        let proj = dot(&qj, &g);
        let mut v_bar: Vec<f64> = g.iter().zip(&qj).map(|(gi, qi)| (gi - proj * qi) / rho).collect();
        let mut v: Vec<f64> = qj.iter().map(|x| x * rho).collect();
        let cj = &tape.coeffs[j];
        for step in (0..cj.len()).rev() {
            let i = step % j.max(1);
            let c = cj[step];
            let qi = q.column(i);
            let qi = qi.as_slice();
            // v_new = v_old - c q_i with c = q_i . v_old
            axpy(c, qi, &mut v);
            let c_bar = -dot(qi, &v_bar);
            let mut qbi = qb.column_mut(i);
            for ((x, vb), vo) in qbi.as_mut_slice().iter_mut().zip(&v_bar).zip(&v) {
                *x += -c * vb + c_bar * vo;
            }
            axpy(c_bar, qi, &mut v_bar);
        }
        a_bar.column_mut(j).iter_mut().zip(&v_bar).for_each(|(a, b)| *a = *b);
    }
    a_bar
}

/// `S_M(z) = M / (1 + e^-z)`
pub fn scaled_sigmoid(z: f64, m: f64) -> f64 {
    m / (1.0 + (-z).exp())
}

/// `S_M'(z)` expressed through `l = S_M(z)`.
pub fn scaled_sigmoid_slope(l: f64, m: f64) -> f64 {
    l * (1.0 - l / m)
}

/// Descending order of `values`, ties by index.
pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Postprocessed surrogate prediction at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    /// Raw head, `n x r`, in network order.
    pub u_raw: DMatrix<f64>,
    /// Raw eigenvalue head, network order.
    pub lambda_raw: Vec<f64>,
    /// Orthonormal columns, sorted with `lambda`.
    pub u: DMatrix<f64>,
    /// Values in `(0, M)`, descending.
    pub lambda: Vec<f64>,
}

impl SurrogateOutput {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// `U Lambda U^T v` with `r` inner products.
    pub fn reconstruct_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, l) in self.lambda.iter().enumerate() {
            let u = self.u.column(i);
            let u = u.as_slice();
            axpy(l * dot(u, v), u, &mut out);
        }
        out
    }

    pub fn reconstruct_dense(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.lambda));
        &self.u * d * self.u.transpose()
    }

    /// Leading `r` pairs (all when `None`) as an [`EigenpairSet`].
    pub fn eigenpairs(&self, r: Option<usize>) -> Result<EigenpairSet> {
        let r = r.unwrap_or(self.rank());
        if r > self.rank() {
            return Err(Error::Config(format!("requested {r} pairs from a rank-{} surrogate", self.rank())));
        }
        let u = self.u.columns(0, r).into_owned();
        EigenpairSet::from_matrix(&u, self.lambda[..r].to_vec())
    }
}
