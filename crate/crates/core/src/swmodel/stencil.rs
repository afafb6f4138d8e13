//! Linear C-grid stencils and their exact transposes.
//!
//! Forward operators overwrite their output. Transposes (`*_t`) accumulate
//! into their output, which is what the reverse sweep needs.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

// centre (i, j): i * ny + j            i < nx,     j < ny
// u face  (i, j): i * ny + j            i < nx - 1, j < ny
// v face  (i, j): i * (ny - 1) + j      i < nx,     j < ny - 1
// corner  (i, j): i * (ny + 1) + j      i <= nx,    j <= ny
impl Stencil {
    #[inline]
    pub fn c(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    #[inline]
    pub fn v(&self, i: usize, j: usize) -> usize {
        i * (self.ny - 1) + j
    }
    #[inline]
    pub fn q(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn n_c(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_u(&self) -> usize {
        (self.nx - 1) * self.ny
    }
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny - 1)
    }
    pub fn n_q(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Centre to u-face average.
    pub fn c_to_u(&self, h: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                out[self.u(i, j)] = 0.5 * (h[self.c(i, j)] + h[self.c(i + 1, j)]);
            }
        }
    }

    pub fn c_to_u_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let w = 0.5 * g[self.u(i, j)];
                out[self.c(i, j)] += w;
                out[self.c(i + 1, j)] += w;
            }
        }
    }

    pub fn c_to_v(&self, h: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                out[self.v(i, j)] = 0.5 * (h[self.c(i, j)] + h[self.c(i, j + 1)]);
            }
        }
    }

    pub fn c_to_v_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let w = 0.5 * g[self.v(i, j)];
                out[self.c(i, j)] += w;
                out[self.c(i, j + 1)] += w;
            }
        }
    }

    /// Divergence of face fluxes; wall fluxes are zero.
    pub fn div(&self, fu: &[f64], fv: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let east = if i + 1 < self.nx { fu[self.u(i, j)] } else { 0.0 };
                let west = if i > 0 { fu[self.u(i - 1, j)] } else { 0.0 };
                let north = if j + 1 < self.ny { fv[self.v(i, j)] } else { 0.0 };
                let south = if j > 0 { fv[self.v(i, j - 1)] } else { 0.0 };
                out[self.c(i, j)] = (east - west) / self.dx + (north - south) / self.dy;
            }
        }
    }

    pub fn div_t(&self, g: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                out_u[self.u(i, j)] += (g[self.c(i, j)] - g[self.c(i + 1, j)]) / self.dx;
            }
        }
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                out_v[self.v(i, j)] += (g[self.c(i, j)] - g[self.c(i, j + 1)]) / self.dy;
            }
        }
    }

    pub fn grad_x(&self, b: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                out[self.u(i, j)] = (b[self.c(i + 1, j)] - b[self.c(i, j)]) / self.dx;
            }
        }
    }

    pub fn grad_x_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let w = g[self.u(i, j)] / self.dx;
                out[self.c(i + 1, j)] += w;
                out[self.c(i, j)] -= w;
            }
        }
    }

    pub fn grad_y(&self, b: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                out[self.v(i, j)] = (b[self.c(i, j + 1)] - b[self.c(i, j)]) / self.dy;
            }
        }
    }

    pub fn grad_y_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let w = g[self.v(i, j)] / self.dy;
                out[self.c(i, j + 1)] += w;
                out[self.c(i, j)] -= w;
            }
        }
    }

    /// Relative vorticity at corners. Free slip makes it vanish on the walls.
    pub fn curl(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|z| *z = 0.0);
        for i in 1..self.nx {
            for j in 1..self.ny {
                out[self.q(i, j)] = (v[self.v(i, j - 1)] - v[self.v(i - 1, j - 1)]) / self.dx
                    - (u[self.u(i - 1, j)] - u[self.u(i - 1, j - 1)]) / self.dy;
            }
        }
    }

    pub fn curl_t(&self, g: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        for i in 1..self.nx {
            for j in 1..self.ny {
                let w = g[self.q(i, j)];
                out_v[self.v(i, j - 1)] += w / self.dx;
                out_v[self.v(i - 1, j - 1)] -= w / self.dx;
                out_u[self.u(i - 1, j)] -= w / self.dy;
                out_u[self.u(i - 1, j - 1)] += w / self.dy;
            }
        }
    }

    /// Corner to u-face average (the two corners on the face).
    pub fn q_to_u(&self, q: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                out[self.u(i, j)] = 0.5 * (q[self.q(i + 1, j)] + q[self.q(i + 1, j + 1)]);
            }
        }
    }

    pub fn q_to_u_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let w = 0.5 * g[self.u(i, j)];
                out[self.q(i + 1, j)] += w;
                out[self.q(i + 1, j + 1)] += w;
            }
        }
    }

    pub fn q_to_v(&self, q: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                out[self.v(i, j)] = 0.5 * (q[self.q(i, j + 1)] + q[self.q(i + 1, j + 1)]);
            }
        }
    }

    pub fn q_to_v_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let w = 0.5 * g[self.v(i, j)];
                out[self.q(i, j + 1)] += w;
                out[self.q(i + 1, j + 1)] += w;
            }
        }
    }

    /// Four-point average of v onto u faces; wall values of v are zero.
    pub fn v_to_u(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let mut s = 0.0;
                if j > 0 {
                    s += v[self.v(i, j - 1)] + v[self.v(i + 1, j - 1)];
                }
                if j + 1 < self.ny {
                    s += v[self.v(i, j)] + v[self.v(i + 1, j)];
                }
                out[self.u(i, j)] = 0.25 * s;
            }
        }
    }

    pub fn v_to_u_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let w = 0.25 * g[self.u(i, j)];
                if j > 0 {
                    out[self.v(i, j - 1)] += w;
                    out[self.v(i + 1, j - 1)] += w;
                }
                if j + 1 < self.ny {
                    out[self.v(i, j)] += w;
                    out[self.v(i + 1, j)] += w;
                }
            }
        }
    }

    pub fn u_to_v(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let mut s = 0.0;
                if i > 0 {
                    s += u[self.u(i - 1, j)] + u[self.u(i - 1, j + 1)];
                }
                if i + 1 < self.nx {
                    s += u[self.u(i, j)] + u[self.u(i, j + 1)];
                }
                out[self.v(i, j)] = 0.25 * s;
            }
        }
    }

    pub fn u_to_v_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let w = 0.25 * g[self.v(i, j)];
                if i > 0 {
                    out[self.u(i - 1, j)] += w;
                    out[self.u(i - 1, j + 1)] += w;
                }
                if i + 1 < self.nx {
                    out[self.u(i, j)] += w;
                    out[self.u(i, j + 1)] += w;
                }
            }
        }
    }

    /// u-face to centre average; wall faces contribute zero.
    pub fn u_to_c(&self, w: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let west = if i > 0 { w[self.u(i - 1, j)] } else { 0.0 };
                let east = if i + 1 < self.nx { w[self.u(i, j)] } else { 0.0 };
                out[self.c(i, j)] = 0.5 * (west + east);
            }
        }
    }

    pub fn u_to_c_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                out[self.u(i, j)] += 0.5 * (g[self.c(i, j)] + g[self.c(i + 1, j)]);
            }
        }
    }

    pub fn v_to_c(&self, w: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let south = if j > 0 { w[self.v(i, j - 1)] } else { 0.0 };
                let north = if j + 1 < self.ny { w[self.v(i, j)] } else { 0.0 };
                out[self.c(i, j)] = 0.5 * (south + north);
            }
        }
    }

    pub fn v_to_c_t(&self, g: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                out[self.v(i, j)] += 0.5 * (g[self.c(i, j)] + g[self.c(i, j + 1)]);
            }
        }
    }

    /// Laplacian of u: no-normal-flow walls in x, free slip in y.
    pub fn lap_u(&self, u: &[f64], out: &mut [f64]) {
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let c = u[self.u(i, j)];
                let w = if i > 0 { u[self.u(i - 1, j)] } else { 0.0 };
                let e = if i + 2 < self.nx { u[self.u(i + 1, j)] } else { 0.0 };
                let s = if j > 0 { u[self.u(i, j - 1)] } else { c };
                let n = if j + 1 < self.ny { u[self.u(i, j + 1)] } else { c };
                out[self.u(i, j)] = ax * (e - 2.0 * c + w) + ay * (n - 2.0 * c + s);
            }
        }
    }

    /// The u Laplacian is symmetric; the transpose accumulates the same stencil.
    pub fn lap_u_t(&self, g: &[f64], out: &mut [f64]) {
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        for i in 0..self.nx - 1 {
            for j in 0..self.ny {
                let w = g[self.u(i, j)];
                let k = self.u(i, j);
                out[k] -= 2.0 * (ax + ay) * w;
                if i > 0 {
                    out[self.u(i - 1, j)] += ax * w;
                }
                if i + 2 < self.nx {
                    out[self.u(i + 1, j)] += ax * w;
                }
                if j > 0 {
                    out[self.u(i, j - 1)] += ay * w;
                } else {
                    out[k] += ay * w;
                }
                if j + 1 < self.ny {
                    out[self.u(i, j + 1)] += ay * w;
                } else {
                    out[k] += ay * w;
                }
            }
        }
    }

    /// Laplacian of v: no-normal-flow walls in y, free slip in x.
    pub fn lap_v(&self, v: &[f64], out: &mut [f64]) {
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let c = v[self.v(i, j)];
                let w = if i > 0 { v[self.v(i - 1, j)] } else { c };
                let e = if i + 1 < self.nx { v[self.v(i + 1, j)] } else { c };
                let s = if j > 0 { v[self.v(i, j - 1)] } else { 0.0 };
                let n = if j + 2 < self.ny { v[self.v(i, j + 1)] } else { 0.0 };
                out[self.v(i, j)] = ax * (e - 2.0 * c + w) + ay * (n - 2.0 * c + s);
            }
        }
    }

    pub fn lap_v_t(&self, g: &[f64], out: &mut [f64]) {
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        for i in 0..self.nx {
            for j in 0..self.ny - 1 {
                let w = g[self.v(i, j)];
                let k = self.v(i, j);
                out[k] -= 2.0 * (ax + ay) * w;
                if i > 0 {
                    out[self.v(i - 1, j)] += ax * w;
                } else {
                    out[k] += ax * w;
                }
                if i + 1 < self.nx {
                    out[self.v(i + 1, j)] += ax * w;
                } else {
                    out[k] += ax * w;
                }
                if j > 0 {
                    out[self.v(i, j - 1)] += ay * w;
                }
                if j + 2 < self.ny {
                    out[self.v(i, j + 1)] += ay * w;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn st() -> Stencil {
        Stencil { nx: 5, ny: 4, dx: 2.0, dy: 3.0 }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// `<A x, y> == <x, A^T y>` for a forward/transpose pair.
    fn check_pair(
        n_in: usize,
        n_out: usize,
        fwd: impl Fn(&[f64], &mut [f64]),
        adj: impl Fn(&[f64], &mut [f64]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = rand_vec(&mut rng, n_in);
            let y = rand_vec(&mut rng, n_out);
            let mut ax = vec![0.0; n_out];
            fwd(&x, &mut ax);
            let mut aty = vec![0.0; n_in];
            adj(&y, &mut aty);
            let (l, r) = (dot(&ax, &y), dot(&x, &aty));
            assert!((l - r).abs() <= 1e-13 * (1.0 + l.abs()), "{l} vs {r}");
        }
    }

    #[test]
    fn averaging_transposes() {
        let s = st();
        check_pair(s.n_c(), s.n_u(), |a, b| s.c_to_u(a, b), |a, b| s.c_to_u_t(a, b));
        check_pair(s.n_c(), s.n_v(), |a, b| s.c_to_v(a, b), |a, b| s.c_to_v_t(a, b));
        check_pair(s.n_q(), s.n_u(), |a, b| s.q_to_u(a, b), |a, b| s.q_to_u_t(a, b));
        check_pair(s.n_q(), s.n_v(), |a, b| s.q_to_v(a, b), |a, b| s.q_to_v_t(a, b));
        check_pair(s.n_v(), s.n_u(), |a, b| s.v_to_u(a, b), |a, b| s.v_to_u_t(a, b));
        check_pair(s.n_u(), s.n_v(), |a, b| s.u_to_v(a, b), |a, b| s.u_to_v_t(a, b));
        check_pair(s.n_u(), s.n_c(), |a, b| s.u_to_c(a, b), |a, b| s.u_to_c_t(a, b));
        check_pair(s.n_v(), s.n_c(), |a, b| s.v_to_c(a, b), |a, b| s.v_to_c_t(a, b));
    }

    #[test]
    fn difference_transposes() {
        let s = st();
        check_pair(s.n_c(), s.n_u(), |a, b| s.grad_x(a, b), |a, b| s.grad_x_t(a, b));
        check_pair(s.n_c(), s.n_v(), |a, b| s.grad_y(a, b), |a, b| s.grad_y_t(a, b));
        check_pair(s.n_u(), s.n_u(), |a, b| s.lap_u(a, b), |a, b| s.lap_u_t(a, b));
        check_pair(s.n_v(), s.n_v(), |a, b| s.lap_v(a, b), |a, b| s.lap_v_t(a, b));
        let (nu, nv) = (s.n_u(), s.n_v());
        check_pair(
            nu + nv,
            s.n_c(),
            |x, out| s.div(&x[..nu], &x[nu..], out),
            |g, out| {
                let (a, b) = out.split_at_mut(nu);
                s.div_t(g, a, b)
            },
        );
        check_pair(
            nu + nv,
            s.n_q(),
            |x, out| s.curl(&x[..nu], &x[nu..], out),
            |g, out| {
                let (a, b) = out.split_at_mut(nu);
                s.curl_t(g, a, b)
            },
        );
    }

    #[test]
    fn divergence_sums_to_zero() {
        let s = st();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fu = rand_vec(&mut rng, s.n_u());
        let fv = rand_vec(&mut rng, s.n_v());
        let mut d = vec![0.0; s.n_c()];
        s.div(&fu, &fv, &mut d);
        assert!(d.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn uniform_flow_has_no_interior_vorticity_or_laplacian_in_y() {
        let s = st();
        let u = vec![1.0; s.n_u()];
        let v = vec![0.0; s.n_v()];
        let mut z = vec![0.0; s.n_q()];
        s.curl(&u, &v, &mut z);
        assert!(z.iter().all(|&x| x == 0.0));
    }
}
