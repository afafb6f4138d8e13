//! Scenario configuration: one JSON document describing grid, physics,
//! background statistics, covariances, dataset, surrogate and experiment.
//!
//! Every section has defaults, so `{}` is a valid desk-scale scenario. See
//! `docs/config.md` for the schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assim::{BackgroundSigmas, CovarianceModel, FourDVar, ObsOperator};
use crate::bench::ExperimentConfig;
use crate::dataset::{DatasetConfig, TrajectorySamplerConfig};
use crate::error::{Error, Result};
use crate::krylov::lanczos_extreme_eigs;
use crate::dataset::{generate_batch, TrainingSample};
use crate::surrogate::{Surrogate, SurrogateConfig, SurrogateSpec, TrainOptions, TrainingCurve};
use crate::swmodel::{ChannelScales, GridSpec, ModelParams, ShallowWater, StateVector};

/// Lanczos steps used for the default eigenvalue bound `M`.
const M_BOUND_LANCZOS_STEPS: usize = 40;

/// How `x^b` is obtained: spin up from rest, then average a free run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub spinup_steps: usize,
    pub average_steps: usize,
    pub sample_every: usize,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self { spinup_steps: 4320, average_steps: 2160, sample_every: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceConfig {
    /// Observation error variance (`R = obs_var I`).
    pub obs_var: f64,
    pub sigma: BackgroundSigmas,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self { obs_var: 1e-3, sigma: BackgroundSigmas { eta: 1.0, u: 1.0, v: 1.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub model: ModelParams,
    pub background: BackgroundConfig,
    pub covariance: CovarianceConfig,
    pub dataset: DatasetConfig,
    pub surrogate: SurrogateSpec,
    pub training: TrainOptions,
    pub experiment: ExperimentConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            grid: GridSpec::desk(),
            model: ModelParams::default(),
            background: BackgroundConfig::default(),
            covariance: CovarianceConfig::default(),
            dataset: DatasetConfig::default(),
            surrogate: SurrogateSpec::default(),
            training: TrainOptions::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Independent seeds derived from the scenario seed, one per random stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub train_data: u64,
    pub held_out_data: u64,
    pub init: u64,
    pub shuffle: u64,
    pub experiment: u64,
}

impl ScenarioConfig {
    pub fn seeds(&self) -> Seeds {
        let mix = |tag: u64| {
            // splitmix64 finalizer
            let mut z = self.seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        };
        Seeds {
            train_data: mix(1),
            held_out_data: mix(2),
            init: mix(3).wrapping_add(self.surrogate.init_seed),
            shuffle: mix(4).wrapping_add(self.training.shuffle_seed),
            experiment: mix(5),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.model.validate(&self.grid)?;
        if self.model.steps_per_window == 0 {
            return Err(Error::Config("steps_per_window must be at least 1".into()));
        }
        if self.background.sample_every == 0 {
            return Err(Error::Config("background.sample_every must be at least 1".into()));
        }
        let s = self.covariance.sigma;
        if !(self.covariance.obs_var > 0.0 && s.eta > 0.0 && s.u > 0.0 && s.v > 0.0) {
            return Err(Error::Config("covariance entries must be positive".into()));
        }
        self.dataset.validate()?;
        self.training.validate()?;
        self.experiment.validate()?;
        let r = self.surrogate.r;
        if r == 0 || r > self.grid.state_len() {
            return Err(Error::Config(format!("surrogate.r must be in 1..={}, got {r}", self.grid.state_len())));
        }
        Ok(())
    }
}

/// Everything derived from a [`ScenarioConfig`] that does not depend on
/// observations: the model, `x^b`, climatological spread and `B`, `R`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: ShallowWater,
    pub background: StateVector,
    /// Channel mean and standard deviation over the averaging run.
    pub climatology: ChannelScales,
    pub obs: ObsOperator,
    pub cov: CovarianceModel,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let model = ShallowWater::new(config.grid, config.model)?;
        let bg = &config.background;
        let mut x = model.propagate(&StateVector::zeros(config.grid), bg.spinup_steps)?;
        let mut samples = vec![x.clone()];
        let mut done = 0;
        while done + bg.sample_every <= bg.average_steps {
            x = model.propagate(&x, bg.sample_every)?;
            samples.push(x.clone());
            done += bg.sample_every;
        }
        let n = config.grid.state_len();
        let mut mean = vec![0.0; n];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s.as_slice()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
        let background = StateVector::from_vec(mean, config.grid)?;
        let climatology = ChannelScales::measure(&samples);
        let obs = ObsOperator::eta_only(&config.grid);
        let cov = CovarianceModel::per_variable(
            &config.grid,
            obs.n_obs(),
            config.covariance.obs_var,
            config.covariance.sigma,
            background.pack(),
        )?;
        Ok(Self { config, model, background, climatology, obs, cov })
    }

    pub fn n(&self) -> usize {
        self.config.grid.state_len()
    }

    pub fn window_steps(&self) -> usize {
        self.config.model.steps_per_window
    }

    /// A 4D-Var problem over one window for the observations `y`.
    pub fn problem(&self, y: Vec<f64>) -> Result<FourDVar> {
        FourDVar::new(self.model.clone(), self.obs.clone(), self.cov.clone(), y, self.window_steps())
    }

    /// A problem whose observations equal `H(M(x^b))`; enough to build `A_x`.
    pub fn operator_problem(&self) -> Result<FourDVar> {
        let mut p = self.problem(vec![0.0; self.obs.n_obs()])?;
        let y = p.forward(&self.background)?;
        p.set_observations(y)?;
        Ok(p)
    }

    /// Trajectory sampler from the dataset section, starting at `x^b`.
    pub fn sampler(&self, seed: u64) -> Result<TrajectorySamplerConfig> {
        self.config.dataset.sampler(self.background.clone(), self.window_steps(), &self.climatology, seed)
    }

    /// Training and held-out samples from independent trajectories.
    pub fn training_data(&self) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
        let d = &self.config.dataset;
        let seeds = self.config.seeds();
        let p = self.operator_problem()?;
        let train = generate_batch(&p, self.sampler(seeds.train_data)?, d.n_samples, d.k)?;
        let held = generate_batch(&p, self.sampler(seeds.held_out_data)?, d.n_held_out, d.k)?;
        Ok((train, held))
    }

    /// Fresh surrogate trained on `train` with the scenario's training options.
    pub fn train_surrogate(&self, train: &[TrainingSample], curve: &mut TrainingCurve) -> Result<Surrogate> {
        let seeds = self.config.seeds();
        let mut s = Surrogate::new(self.surrogate_config()?, seeds.init)?;
        let opts = TrainOptions { shuffle_seed: seeds.shuffle, ..self.config.training };
        s.train(train, &opts, curve)?;
        Ok(s)
    }

    /// Resolves the surrogate section; a missing `M` becomes twice the
    /// Lanczos estimate of `lambda_1` at `x^b`.
    pub fn surrogate_config(&self) -> Result<SurrogateConfig> {
        let spec = &self.config.surrogate;
        let m_bound = match spec.m_bound {
            Some(m) => m,
            None => {
                let p = self.operator_problem()?;
                let sys = p.build_gn_system(&self.background)?;
                2.0 * lanczos_extreme_eigs(&sys, M_BOUND_LANCZOS_STEPS).lambda_max
            }
        };
        let cfg = SurrogateConfig {
            grid: self.config.grid,
            r: spec.r,
            m_bound,
            input: spec.input,
            layers: spec.layers.clone(),
            scales: self.climatology,
            orthogonalization: spec.orthogonalization,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_desk_default() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let again = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"grdi": {}}"#).is_err());
    }

    #[test]
    fn cfl_checked_on_load() {
        let err = ScenarioConfig::from_json(r#"{"model": {"dt": 100000.0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn small_scenario_builds() {
        let cfg = ScenarioConfig {
            grid: GridSpec::new(6, 6, 1.8e6, 1.8e6).unwrap(),
            background: BackgroundConfig { spinup_steps: 50, average_steps: 20, sample_every: 5 },
            ..Default::default()
        };
        let s = Scenario::build(cfg).unwrap();
        assert_eq!(s.background.len(), s.n());
        assert!(s.climatology.std.iter().all(|v| *v > 0.0));
    }
}
