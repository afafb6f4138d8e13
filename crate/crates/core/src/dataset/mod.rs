//! Online generation of training triples `(x_i, Z_i, A_{x_i} Z_i)`.
//!
//! States come from a trajectory: each new state is the previous one plus a
//! small Gaussian perturbation, advanced by a random lead time. Probe
//! matrices are standard normal; `Y = A_x Z` costs one tangent-linear and one
//! adjoint sweep per column over a single stored trajectory.

mod shard;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use shard::{read_shard, shard_len, write_shard, write_shards, PCDS_MAGIC, PCDS_VERSION, SHARD_HEADER_LEN};

use crate::assim::FourDVar;
use crate::error::{Error, Result};
use crate::linop::LinearOperator;
use crate::rng::GaussianRng;
use crate::swmodel::{ChannelScales, StateVector};

/// Maximum perturbation redraws after a model blow-up before giving up.
pub const MAX_RESAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: StateVector,
    /// `n x k`, iid standard normal.
    pub z: DMatrix<f64>,
    /// `A_x Z`
    pub y: DMatrix<f64>,
}

impl TrainingSample {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// Dataset section of a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Training states.
    pub n_samples: usize,
    /// Held-out states, drawn from an independent trajectory.
    pub n_held_out: usize,
    /// Probes per state.
    pub k: usize,
    /// Lead time range as fractions of the assimilation window.
    pub lead_fraction: (f64, f64),
    /// Perturbation std as a fraction of the climatological channel std.
    pub perturbation_fraction: f64,
    /// Shard size cap for `gen-data`; `None` writes one shard.
    pub max_shard_bytes: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            n_held_out: 10,
            k: 32,
            lead_fraction: (0.5, 1.5),
            perturbation_fraction: 0.01,
            max_shard_bytes: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.lead_fraction;
        if self.k == 0 {
            return Err(Error::Config("dataset.k must be at least 1".into()));
        }
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return Err(Error::Config(format!("dataset.lead_fraction must satisfy 0 < min <= max, got ({a}, {b})")));
        }
        if !(self.perturbation_fraction >= 0.0) {
            return Err(Error::Config("dataset.perturbation_fraction must be non-negative".into()));
        }
        Ok(())
    }

    /// Resolves lead times against a window of `window_steps` steps and
    /// amplitudes against `climatology`.
    pub fn sampler(&self, base: StateVector, window_steps: usize, climatology: &ChannelScales, seed: u64) -> Result<TrajectorySamplerConfig> {
        self.validate()?;
        let t = window_steps as f64;
        let lead_min = ((self.lead_fraction.0 * t).round() as usize).max(1);
        let lead_max = ((self.lead_fraction.1 * t).round() as usize).max(lead_min);
        let amplitude = climatology.std.map(|s| s * self.perturbation_fraction);
        TrajectorySamplerConfig::new(base, lead_min, lead_max, amplitude, seed)
    }
}

/// Resolved trajectory sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySamplerConfig {
    pub base: StateVector,
    pub lead_min: usize,
    pub lead_max: usize,
    /// Perturbation std per variable (`eta`, `u`, `v`).
    pub amplitude: [f64; 3],
    pub seed: u64,
}

impl TrajectorySamplerConfig {
    pub fn new(base: StateVector, lead_min: usize, lead_max: usize, amplitude: [f64; 3], seed: u64) -> Result<Self> {
        if lead_min == 0 || lead_max < lead_min {
            return Err(Error::Config(format!("lead time range must satisfy 1 <= min <= max, got {lead_min}..={lead_max}")));
        }
        if amplitude.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("perturbation amplitudes must be non-negative".into()));
        }
        Ok(Self { base, lead_min, lead_max, amplitude, seed })
    }
}

/// Adds per-variable Gaussian noise of std `amplitude` to `x`.
pub fn perturb(x: &StateVector, amplitude: [f64; 3], rng: &mut GaussianRng) -> StateVector {
    let mut out = x.clone();
    let (eta, u, v) = out.fields_mut();
    for (field, a) in [eta, u, v].into_iter().zip(amplitude) {
        for f in field {
            *f += a * rng.standard();
        }
    }
    out
}

/// Lazily generated, unbounded sample sequence.
pub struct SampleStream<'p> {
    problem: &'p FourDVar,
    cfg: TrajectorySamplerConfig,
    k: usize,
    rng: GaussianRng,
    state: Option<StateVector>,
    failed: bool,
}

/// Samples from the trajectory starting at the advanced `cfg.base`.
///
/// `problem` supplies the model, window, `H`, `R` and `B`; its observations
/// are not used.
pub fn stream(problem: &FourDVar, cfg: TrajectorySamplerConfig, k: usize) -> Result<SampleStream<'_>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if cfg.base.len() != problem.n() {
        return Err(Error::Shape(format!("base state has length {}, problem expects {}", cfg.base.len(), problem.n())));
    }
    let rng = GaussianRng::new(cfg.seed);
    Ok(SampleStream { problem, cfg, k, rng, state: None, failed: false })
}

/// First `n_batch` items of [`stream`].
pub fn generate_batch(problem: &FourDVar, cfg: TrajectorySamplerConfig, n_batch: usize, k: usize) -> Result<Vec<TrainingSample>> {
    stream(problem, cfg, k)?.take(n_batch).collect()
}

impl SampleStream<'_> {
    /// Perturb-and-propagate, redrawing the perturbation after a blow-up.
    fn advance(&mut self, x: &StateVector) -> Result<StateVector> {
        let model = self.problem.model();
        for attempt in 0..MAX_RESAMPLES {
            let lead = self.rng.int_in(self.cfg.lead_min, self.cfg.lead_max);
            let start = perturb(x, self.cfg.amplitude, &mut self.rng);
            match model.propagate(&start, lead) {
                Ok(next) => return Ok(next),
                Err(Error::NumericalBlowup { step }) => {
                    warn!("trajectory blew up at step {step} (attempt {attempt}); resampling perturbation");
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::NumericalBlowup { step: 0 })
    }

    fn sample_at(&mut self, x: StateVector) -> Result<TrainingSample> {
        let n = x.len();
        let mut z = DMatrix::zeros(n, self.k);
        self.rng.fill(z.as_mut_slice());
        let sys = self.problem.build_gn_system(&x)?;
        let mut y = DMatrix::zeros(n, self.k);
        for j in 0..self.k {
            sys.apply_into(z.column(j).as_slice(), y.column_mut(j).as_mut_slice());
        }
        Ok(TrainingSample { x, z, y })
    }

    fn try_next(&mut self) -> Result<TrainingSample> {
        let x = match self.state.take() {
            Some(x) => x,
            None => {
                let base = self.cfg.base.clone();
                self.advance(&base)?
            }
        };
        let sample = self.sample_at(x)?;
        self.state = Some(self.advance(&sample.x)?);
        Ok(sample)
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Result<TrainingSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.try_next();
        self.failed = out.is_err();
        Some(out)
    }
}
