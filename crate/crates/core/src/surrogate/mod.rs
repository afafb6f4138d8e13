//! Trainable map from a linearization state to approximate leading
//! eigenpairs of the Gauss-Newton matrix.
//!
//! The network head emits `(n + 1) r` numbers: `r` raw columns (column-major)
//! followed by `r` raw eigenvalues. Columns are orthonormalized by modified
//! Gram-Schmidt, eigenvalues squashed into `(0, M)` by a scaled sigmoid, and
//! the pairs sorted by decreasing eigenvalue. Gradients flow through all of
//! it.

mod checkpoint;
mod net;
mod post;
mod train;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, SURR_MAGIC, SURR_VERSION};
pub use net::{InputKind, LayerSpec, Network};
pub use post::{scaled_sigmoid, scaled_sigmoid_slope, SurrogateOutput, MGS_MIN_NORM};
pub use train::{AdamConfig, AdamState, CurvePoint, TrainOptions, TrainingCurve};

use crate::dataset::TrainingSample;
use crate::error::{Error, Result};
use crate::linop::{Identity, LinearOperator};
use crate::precond::{split_l, MuPolicy, SplitFactor};
use crate::rng::GaussianRng;
use crate::swmodel::{to_image, ChannelScales, GridSpec, StateVector};
use post::{descending_order, mgs, mgs_backward, MgsTape};

/// How orthonormality enters training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Orthogonalization {
    /// Loss evaluated on the Gram-Schmidt output, differentiated through it.
    Differentiate,
    /// Loss evaluated on the raw columns plus `weight ||U~^T U~ - I||_F^2`.
    /// Inference still orthonormalizes.
    Penalty { weight: f64 },
}

/// Fully resolved surrogate description; stored verbatim in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub grid: GridSpec,
    pub r: usize,
    /// Upper bound `M` of predicted eigenvalues.
    pub m_bound: f64,
    pub input: InputKind,
    pub layers: Vec<LayerSpec>,
    /// Input normalization.
    pub scales: ChannelScales,
    pub orthogonalization: Orthogonalization,
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.state_len();
        if self.r == 0 || self.r > n {
            return Err(Error::Config(format!("surrogate rank must be in 1..={n}, got {}", self.r)));
        }
        if !(self.m_bound > 0.0 && self.m_bound.is_finite()) {
            return Err(Error::Config(format!("eigenvalue bound M must be positive, got {}", self.m_bound)));
        }
        if self.scales.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("channel scales must have positive std".into()));
        }
        if let Orthogonalization::Penalty { weight } = self.orthogonalization {
            if !(weight >= 0.0) {
                return Err(Error::Config("orthogonality penalty weight must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn head_len(&self) -> usize {
        (self.grid.state_len() + 1) * self.r
    }
}

/// User-facing surrogate settings; `M` and the input scales are filled in
/// from the scenario by `Scenario::surrogate_config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSpec {
    pub r: usize,
    /// `None`: twice the Lanczos estimate of `lambda_1` at the background.
    pub m_bound: Option<f64>,
    pub input: InputKind,
    pub layers: Vec<LayerSpec>,
    pub orthogonalization: Orthogonalization,
    /// Parameter initialization seed offset (added to the scenario seed).
    pub init_seed: u64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            r: 16,
            m_bound: None,
            input: InputKind::Image,
            layers: vec![LayerSpec::Conv { channels: 8 }, LayerSpec::Conv { channels: 16 }, LayerSpec::Dense { width: 8 }],
            orthogonalization: Orthogonalization::Differentiate,
            init_seed: 0,
        }
    }
}

/// Loss at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    /// `(1/k) sum_j ||A_theta z_j - y_j||^2`
    pub loss: f64,
    /// `loss / ((1/k) sum_j ||y_j||^2)`
    pub relative: f64,
}

/// Network weights plus optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub theta: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    config: SurrogateConfig,
    net: Network,
    params: SurrogateParams,
}

struct ForwardPass {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
    /// Orthonormalized columns in network order, with their tape.
    q: DMatrix<f64>,
    tape: Option<MgsTape>,
    /// Sigmoid outputs in network order.
    lambda_net: Vec<f64>,
    order: Vec<usize>,
}

impl Surrogate {
    pub fn new(config: SurrogateConfig, seed: u64) -> Result<Self> {
        let net = Self::network(&config)?;
        let theta = net.init(&mut GaussianRng::new(seed));
        let adam = AdamState::new(theta.len());
        Ok(Self { config, net, params: SurrogateParams { theta, adam } })
    }

    pub fn from_parts(config: SurrogateConfig, params: SurrogateParams) -> Result<Self> {
        let net = Self::network(&config)?;
        if params.theta.len() != net.n_params() || params.adam.len() != net.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, architecture needs {}",
                params.theta.len(),
                net.n_params()
            )));
        }
        Ok(Self { config, net, params })
    }

    fn network(config: &SurrogateConfig) -> Result<Network> {
        config.validate()?;
        let g = config.grid;
        let (n_in, image) = match config.input {
            InputKind::Flat => (g.state_len(), None),
            InputKind::Image => (g.nx * g.ny * 3, Some((g.nx, g.ny))),
        };
        Network::new(n_in, image, &config.layers, config.head_len())
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    pub fn theta(&self) -> &[f64] {
        &self.params.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.net.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.net.n_params(), theta.len())));
        }
        self.params.theta = theta;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.net.n_params()
    }

    pub fn n(&self) -> usize {
        self.config.grid.state_len()
    }

    pub fn rank(&self) -> usize {
        self.config.r
    }

    fn input(&self, x: &StateVector) -> Result<Vec<f64>> {
        if *x.grid() != self.config.grid {
            return Err(Error::Shape("state grid differs from the surrogate grid".into()));
        }
        let s = &self.config.scales;
        Ok(match self.config.input {
            InputKind::Image => to_image(x, s),
            InputKind::Flat => {
                let mut v = Vec::with_capacity(x.len());
                for (c, field) in [x.eta(), x.u(), x.v()].into_iter().enumerate() {
                    v.extend(field.iter().map(|f| (f - s.mean[c]) / s.std[c]));
                }
                v
            }
        })
    }

    fn raw_head(&self, head: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
        let (n, r) = (self.n(), self.config.r);
        (DMatrix::from_column_slice(n, r, &head[..n * r]), head[n * r..].to_vec())
    }

    fn run(&self, theta: &[f64], x: &StateVector, orthonormalize: bool) -> Result<(ForwardPass, SurrogateOutput)> {
        let input = self.input(x)?;
        let acts = self.net.forward(theta, &input);
        let (u_raw, lambda_raw) = self.raw_head(acts.last().expect("network has a head"));
        let (q, tape) = if orthonormalize {
            let (q, t) = mgs(&u_raw)?;
            (q, Some(t))
        } else {
            (u_raw.clone(), None)
        };
        let m = self.config.m_bound;
        let lambda_net: Vec<f64> = lambda_raw.iter().map(|z| scaled_sigmoid(*z, m)).collect();
        let order = descending_order(&lambda_net);
        let u = DMatrix::from_fn(q.nrows(), q.ncols(), |i, c| q[(i, order[c])]);
        let lambda = order.iter().map(|&k| lambda_net[k]).collect();
        let out = SurrogateOutput { u_raw, lambda_raw, u, lambda };
        Ok((ForwardPass { input, acts, q, tape, lambda_net, order }, out))
    }

    /// Prediction at `x` with the current parameters.
    pub fn forward(&self, x: &StateVector) -> Result<SurrogateOutput> {
        self.forward_with(&self.params.theta, x)
    }

    pub fn forward_with(&self, theta: &[f64], x: &StateVector) -> Result<SurrogateOutput> {
        Ok(self.run(theta, x, true)?.1)
    }

    /// Randomized Frobenius loss of the orthonormalized prediction.
    pub fn loss(&self, sample: &TrainingSample) -> Result<LossValue> {
        self.loss_with(&self.params.theta, sample)
    }

    pub fn loss_with(&self, theta: &[f64], sample: &TrainingSample) -> Result<LossValue> {
        let out = self.forward_with(theta, &sample.x)?;
        Ok(reconstruction_loss(&out.u, &out.lambda, &sample.z, &sample.y).0)
    }

    /// Mean loss over a set of samples.
    pub fn evaluate(&self, samples: &[TrainingSample]) -> Result<LossValue> {
        let mut acc = LossValue::default();
        for s in samples {
            let l = self.loss(s)?;
            acc.loss += l.loss;
            acc.relative += l.relative;
        }
        let k = samples.len().max(1) as f64;
        Ok(LossValue { loss: acc.loss / k, relative: acc.relative / k })
    }

    /// The quantity [`Self::grad_loss`] differentiates. With
    /// [`Orthogonalization::Differentiate`] this equals [`Self::loss_with`];
    /// in penalty mode it is the loss of the raw columns plus the penalty.
    pub fn objective_with(&self, theta: &[f64], sample: &TrainingSample) -> Result<LossValue> {
        match self.config.orthogonalization {
            Orthogonalization::Differentiate => self.loss_with(theta, sample),
            Orthogonalization::Penalty { weight } => {
                let (fp, out) = self.run(theta, &sample.x, false)?;
                let mut value = reconstruction_loss(&out.u, &out.lambda, &sample.z, &sample.y).0;
                let e = fp.q.transpose() * &fp.q - DMatrix::identity(self.config.r, self.config.r);
                value.loss += weight * e.norm_squared();
                Ok(value)
            }
        }
    }

    /// Training objective and its exact gradient with respect to `theta`.
    pub fn grad_loss(&self, theta: &[f64], sample: &TrainingSample) -> Result<(LossValue, Vec<f64>)> {
        let mut grad = vec![0.0; theta.len()];
        let value = self.grad_loss_accumulate(theta, sample, &mut grad)?;
        Ok((value, grad))
    }

    /// As [`Self::grad_loss`], adding the gradient into `grad`.
    pub fn grad_loss_accumulate(&self, theta: &[f64], sample: &TrainingSample, grad: &mut [f64]) -> Result<LossValue> {
        let penalty = match self.config.orthogonalization {
            Orthogonalization::Differentiate => None,
            Orthogonalization::Penalty { weight } => Some(weight),
        };
        let (fp, out) = self.run(theta, &sample.x, penalty.is_none())?;
        let (mut value, u_bar, lambda_bar) = reconstruction_grad(&out.u, &out.lambda, &sample.z, &sample.y);
        let (n, r) = (self.n(), self.config.r);
        let mut q_bar = DMatrix::zeros(n, r);
        let mut z_bar = vec![0.0; r];
        let m = self.config.m_bound;
        for (s, &k) in fp.order.iter().enumerate() {
            q_bar.set_column(k, &u_bar.column(s));
            z_bar[k] = lambda_bar[s] * scaled_sigmoid_slope(fp.lambda_net[k], m);
        }
        let raw_bar = match (&fp.tape, penalty) {
            (Some(tape), _) => mgs_backward(&fp.q, tape, &q_bar),
            (None, Some(w)) => {
                // d/dU ||U^T U - I||^2 = 4 U (U^T U - I)
                let e = fp.q.transpose() * &fp.q - DMatrix::identity(r, r);
                value.loss += w * e.norm_squared();
                q_bar + &fp.q * e * (4.0 * w)
            }
            (None, None) => unreachable!("orthonormalization skipped only in penalty mode"),
        };
        let mut g_out = Vec::with_capacity(self.config.head_len());
        g_out.extend_from_slice(raw_bar.as_slice());
        g_out.extend_from_slice(&z_bar);
        self.net.backward(theta, &fp.input, &fp.acts, &g_out, grad);
        Ok(value)
    }

    /// Split preconditioner from the prediction at `x`, keeping the leading
    /// `r` pairs (all when `None`). A degenerate prediction falls back to the
    /// identity.
    pub fn build_preconditioner(&self, x: &StateVector, mu: MuPolicy, r: Option<usize>) -> Result<LearnedPreconditioner> {
        let out = match self.forward(x) {
            Ok(out) => out,
            Err(e @ Error::DegenerateOutput { .. }) => {
                warn!("surrogate output degenerate ({e}); using the identity preconditioner");
                return Ok(LearnedPreconditioner::Fallback(Identity(self.n())));
            }
            Err(e) => return Err(e),
        };
        preconditioner_from_output(&out, mu, r)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        write_checkpoint(self, path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        read_checkpoint(path)
    }
}

/// Split preconditioner from a surrogate prediction: leading `r` pairs, `mu`
/// resolved by `policy` and clamped to `>= 1`.
pub fn preconditioner_from_output(out: &SurrogateOutput, policy: MuPolicy, r: Option<usize>) -> Result<LearnedPreconditioner> {
    let pairs = out.eigenpairs(r)?;
    let mu = policy.resolve(pairs.values());
    Ok(LearnedPreconditioner::Split(split_l(pairs, mu)?))
}

/// Either the learned split factor or the identity fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedPreconditioner {
    Split(SplitFactor),
    Fallback(Identity),
}

impl LearnedPreconditioner {
    pub fn mu(&self) -> Option<f64> {
        match self {
            Self::Split(l) => Some(l.mu()),
            Self::Fallback(_) => None,
        }
    }
}

impl LinearOperator for LearnedPreconditioner {
    fn dim(&self) -> usize {
        match self {
            Self::Split(l) => l.dim(),
            Self::Fallback(i) => i.dim(),
        }
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Self::Split(l) => l.apply_into(v, out),
            Self::Fallback(i) => i.apply_into(v, out),
        }
    }
}

/// Loss of `U diag(lambda) U^T` against probes `Y = A Z`; also returns the residual `R`.
pub fn reconstruction_loss(u: &DMatrix<f64>, lambda: &[f64], z: &DMatrix<f64>, y: &DMatrix<f64>) -> (LossValue, DMatrix<f64>) {
    let k = z.ncols() as f64;
    let mut w = u.transpose() * z;
    for (i, l) in lambda.iter().enumerate() {
        w.row_mut(i).scale_mut(*l);
    }
    let resid = u * w - y;
    let loss = resid.norm_squared() / k;
    let y2 = y.norm_squared() / k;
    let relative = if y2 > 0.0 { loss / y2 } else { f64::NAN };
    (LossValue { loss, relative }, resid)
}

/// Loss and its gradients with respect to `U` and `lambda`.
fn reconstruction_grad(u: &DMatrix<f64>, lambda: &[f64], z: &DMatrix<f64>, y: &DMatrix<f64>) -> (LossValue, DMatrix<f64>, Vec<f64>) {
    let k = z.ncols() as f64;
    let (value, resid) = reconstruction_loss(u, lambda, z, y);
    let r_bar = resid * (2.0 / k);
    let w = u.transpose() * z;
    let v = u.transpose() * &r_bar;
    let lambda_bar: Vec<f64> = (0..lambda.len()).map(|i| w.row(i).dot(&v.row(i))).collect();
    let mut lw = w;
    let mut lv = v;
    for (i, l) in lambda.iter().enumerate() {
        lw.row_mut(i).scale_mut(*l);
        lv.row_mut(i).scale_mut(*l);
    }
    // U_bar = R_bar (Lambda W)^T + Z (Lambda V)^T
    let u_bar = &r_bar * lw.transpose() + z * lv.transpose();
    (value, u_bar, lambda_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_grad_matches_fd() {
        let mut g = GaussianRng::new(5);
        let (n, r, k) = (7, 3, 4);
        let u = DMatrix::from_fn(n, r, |_, _| g.standard());
        let lambda = vec![2.0, 1.3, 0.4];
        let z = DMatrix::from_fn(n, k, |_, _| g.standard());
        let y = DMatrix::from_fn(n, k, |_, _| g.standard());
        let (_, ub, lb) = reconstruction_grad(&u, &lambda, &z, &y);
        let h = 1e-6;
        for idx in 0..u.len() {
            let mut up = u.clone();
            up[idx] += h;
            let mut um = u.clone();
            um[idx] -= h;
            let fd = (reconstruction_loss(&up, &lambda, &z, &y).0.loss - reconstruction_loss(&um, &lambda, &z, &y).0.loss) / (2.0 * h);
            assert!((fd - ub[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
        for i in 0..r {
            let mut lp = lambda.clone();
            lp[i] += h;
            let mut lm = lambda.clone();
            lm[i] -= h;
            let fd = (reconstruction_loss(&u, &lp, &z, &y).0.loss - reconstruction_loss(&u, &lm, &z, &y).0.loss) / (2.0 * h);
            assert!((fd - lb[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
