use std::io::Write;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{LossValue, Surrogate};
use crate::dataset::TrainingSample;
use crate::error::{Error, Result};
use crate::rng::GaussianRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments plus step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, cfg: &AdamConfig, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for (((th, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *th -= cfg.lr * (*m / b1t) / ((*v / b2t).sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed of the per-epoch shuffle.
    pub shuffle_seed: u64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() }, batch_size: 8, epochs: 60, shuffle_seed: 0, lr_decay: 0.97 }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(a.lr >= 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("invalid Adam hyper-parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub relative_loss: f64,
}

/// Per-batch training objective before each update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "step,epoch,loss,relative_loss")?;
        for p in &self.points {
            writeln!(w, "{},{},{:e},{:e}", p.step, p.epoch, p.loss, p.relative_loss)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

impl Surrogate {
    /// Mean objective and gradient over `batch`, accumulated in batch order.
    pub fn batch_gradient(&self, batch: &[&TrainingSample]) -> Result<(LossValue, Vec<f64>)> {
        let theta = &self.params.theta;
        let mut grad = vec![0.0; theta.len()];
        let mut value = LossValue::default();
        for s in batch {
            let l = self.grad_loss_accumulate(theta, s, &mut grad)?;
            value.loss += l.loss;
            value.relative += l.relative;
        }
        let inv = 1.0 / batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        value.loss *= inv;
        value.relative *= inv;
        Ok((value, grad))
    }

    /// One optimizer update from `batch`. Returns the pre-update objective.
    /// On a non-finite objective or gradient the parameters are left untouched.
    pub fn train_step(&mut self, batch: &[&TrainingSample], opts: &TrainOptions, step: usize) -> Result<LossValue> {
        let (value, grad) = self.batch_gradient(batch)?;
        if !value.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss: value.loss });
        }
        let SurrogateParams { theta, adam } = &mut self.params;
        adam.step(&opts.adam, theta, &grad);
        Ok(value)
    }

    /// Epoch training over an in-memory set, shuffled per epoch. Points are
    /// appended to `curve` as they are produced.
    ///
    /// On divergence the parameters revert to those of the last step with a
    /// finite objective and [`Error::Diverged`] is returned.
    pub fn train(&mut self, data: &[TrainingSample], opts: &TrainOptions, curve: &mut TrainingCurve) -> Result<()> {
        opts.validate()?;
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut rng = GaussianRng::new(opts.shuffle_seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut step = 0;
        let mut last_good = self.params.clone();
        let mut step_opts = *opts;
        for epoch in 0..opts.epochs {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.int_in(0, i));
            }
            for chunk in order.chunks(opts.batch_size) {
                let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &data[i]).collect();
                let before = self.params.clone();
                match self.train_step(&batch, &step_opts, step) {
                    Ok(v) => {
                        debug!("step {step} epoch {epoch} loss {:.4e} rel {:.4}", v.loss, v.relative);
                        curve.points.push(CurvePoint { step, epoch, loss: v.loss, relative_loss: v.relative });
                        last_good = before;
                    }
                    Err(e) => {
                        self.params = last_good;
                        return Err(e);
                    }
                }
                step += 1;
            }
            if let Some(p) = curve.points.last() {
                info!("epoch {epoch}: last batch relative loss {:.4}", p.relative_loss);
            }
            step_opts.adam.lr *= opts.lr_decay;
        }
        Ok(())
    }

    /// Trains on `steps` batches pulled from an unbounded stream.
    pub fn train_stream(
        &mut self,
        stream: &mut dyn Iterator<Item = Result<TrainingSample>>,
        opts: &TrainOptions,
        steps: usize,
    ) -> Result<TrainingCurve> {
        opts.validate()?;
        let mut curve = TrainingCurve::default();
        for step in 0..steps {
            let batch = stream.take(opts.batch_size).collect::<Result<Vec<_>>>()?;
            if batch.is_empty() {
                break;
            }
            let refs: Vec<&TrainingSample> = batch.iter().collect();
            let v = self.train_step(&refs, opts, step)?;
            curve.points.push(CurvePoint { step, epoch: 0, loss: v.loss, relative_loss: v.relative });
        }
        Ok(curve)
    }
}

use super::SurrogateParams;
