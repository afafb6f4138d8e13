//! Paired comparison of preconditioner variants over a sequence of
//! assimilation cycles.
//!
//! Every variant solves the same `(A_x, b_x)` in each cycle; the state then
//! moves by the reference variant's increment so later systems are shared too.

mod report;

use std::collections::HashMap;
use std::path::PathBuf;

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use report::{emit_report, VariantSummary};

use crate::assim::GaussNewtonSystem;
use crate::dataset::perturb;
use crate::error::{Error, Result};
use crate::krylov::{pcg_split, CgOptions, SolveReport};
use crate::linop::{Identity, LinearOperator};
use crate::precond::{b_half_preconditioner, exact_leading_eigs, split_l, EigenpairSet, MuPolicy};
use crate::rng::GaussianRng;
use crate::scenario::Scenario;
use crate::surrogate::Surrogate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantKind {
    /// Plain CG.
    None,
    /// `L = B^{1/2}`.
    BHalf,
    /// Leading `r` eigenpairs of `A_x`, computed per cycle.
    ExactEigs {
        r: usize,
        mu: MuPolicy,
        /// Multiplies the smallest eigenvalue before building `L`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_scale: Option<f64>,
    },
    /// Surrogate prediction at the linearization state.
    Learned {
        checkpoint: PathBuf,
        /// Leading pairs kept; all when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<usize>,
        mu: MuPolicy,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_scale: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: VariantKind,
}

impl Variant {
    pub fn new(kind: VariantKind) -> Self {
        Self { name: None, kind }
    }

    pub fn named(name: impl Into<String>, kind: VariantKind) -> Self {
        Self { name: Some(name.into()), kind }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            VariantKind::None => "none".into(),
            VariantKind::BHalf => "b_half".into(),
            VariantKind::ExactEigs { r, .. } => format!("exact_eigs_r{r}"),
            VariantKind::Learned { r: Some(r), .. } => format!("learned_r{r}"),
            VariantKind::Learned { r: None, .. } => "learned".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Assimilation cycles per repeat.
    pub cycles: usize,
    /// Independent truth/state pairs, each run for `cycles` cycles.
    pub repeats: usize,
    pub tol: f64,
    pub maxit: usize,
    pub variants: Vec<Variant>,
    /// Observation noise std; `None` is 1% of the climatological `eta` std.
    pub obs_noise_std: Option<f64>,
    /// Initial truth and state perturbation, as a fraction of channel std.
    pub perturbation_fraction: f64,
    /// Exact eigenpairs use a dense eigensolver up to this dimension.
    pub exact_dense_threshold: usize,
    /// Variant whose increment updates the state; the first `none` variant
    /// (or the first variant) when absent.
    pub reference: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cycles: 20,
            repeats: 1,
            tol: 1e-7,
            maxit: 2000,
            variants: vec![
                Variant::new(VariantKind::None),
                Variant::new(VariantKind::BHalf),
                Variant::new(VariantKind::ExactEigs { r: 16, mu: MuPolicy::MinPredicted, tail_scale: None }),
            ],
            obs_noise_std: None,
            perturbation_fraction: 0.01,
            exact_dense_threshold: 0,
            reference: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 || self.repeats == 0 {
            return Err(Error::Config("experiment needs at least one cycle and one repeat".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("experiment needs at least one variant".into()));
        }
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::Config("experiment tol must be positive and maxit at least 1".into()));
        }
        let mut labels: Vec<String> = self.variants.iter().map(Variant::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("variant labels must be unique; set `name` to disambiguate".into()));
        }
        for v in &self.variants {
            match &v.kind {
                VariantKind::ExactEigs { r: 0, .. } | VariantKind::Learned { r: Some(0), .. } => {
                    return Err(Error::Config(format!("variant {} keeps zero eigenpairs", v.label())));
                }
                VariantKind::ExactEigs { tail_scale: Some(s), .. } | VariantKind::Learned { tail_scale: Some(s), .. }
                    if !(*s > 0.0) =>
                {
                    return Err(Error::Config(format!("variant {}: tail_scale must be positive", v.label())));
                }
                _ => {}
            }
        }
        if let Some(r) = &self.reference {
            if !self.variants.iter().any(|v| &v.label() == r) {
                return Err(Error::Config(format!("reference variant {r} is not in the variant list")));
            }
        }
        Ok(())
    }

    fn reference_index(&self) -> usize {
        match &self.reference {
            Some(r) => self.variants.iter().position(|v| &v.label() == r).unwrap_or(0),
            None => self.variants.iter().position(|v| v.kind == VariantKind::None).unwrap_or(0),
        }
    }
}

/// One variant's solve in one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    /// Cycle index across repeats: `repeat * cycles + cycle`.
    pub cycle: usize,
    pub variant: String,
    pub report: SolveReport,
    /// Head multiplier actually used, for spectral variants.
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub variants: Vec<String>,
    pub records: Vec<SolveRecord>,
    /// FNV-1a hash of `A_x p` for a fixed probe `p`, per cycle.
    pub probe_hashes: Vec<u64>,
    pub summary: Vec<VariantSummary>,
}

impl ExperimentReport {
    pub fn iterations(&self, variant: &str) -> Vec<usize> {
        self.records.iter().filter(|r| r.variant == variant).map(|r| r.report.iterations).collect()
    }

    pub fn summary_for(&self, variant: &str) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.name == variant)
    }
}

fn scale_tail(pairs: EigenpairSet, tail_scale: Option<f64>) -> Result<EigenpairSet> {
    match tail_scale {
        Some(s) if pairs.rank() > 0 => {
            let mut vals = pairs.values().to_vec();
            *vals.last_mut().expect("non-empty") *= s;
            pairs.with_values(vals)
        }
        _ => Ok(pairs),
    }
}

fn probe_hash(sys: &GaussNewtonSystem<'_>) -> u64 {
    let probe = GaussianRng::new(0x0b5e_55ed).vector(sys.dim());
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in sys.apply(&probe) {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Runs all cycles and variants. Deterministic for a fixed `seed`.
pub fn run_experiment(scenario: &Scenario, cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut surrogates: HashMap<PathBuf, Surrogate> = HashMap::new();
    for v in &cfg.variants {
        if let VariantKind::Learned { checkpoint, r, .. } = &v.kind {
            if !surrogates.contains_key(checkpoint) {
                let s = Surrogate::load(checkpoint).map_err(|e| {
                    Error::Config(format!("cannot load checkpoint {}: {e}", checkpoint.display()))
                })?;
                if s.n() != scenario.n() {
                    return Err(Error::Config(format!("checkpoint {} was trained on another grid", checkpoint.display())));
                }
                surrogates.insert(checkpoint.clone(), s);
            }
            let trained = surrogates[checkpoint].rank();
            if r.is_some_and(|r| r > trained) {
                return Err(Error::Config(format!("variant {} asks for more pairs than the surrogate's {trained}", v.label())));
            }
        }
    }
    let labels: Vec<String> = cfg.variants.iter().map(Variant::label).collect();
    let reference = cfg.reference_index();
    let clim = scenario.climatology;
    let noise_std = cfg.obs_noise_std.unwrap_or(0.01 * clim.std[0]);
    let amplitude = clim.std.map(|s| s * cfg.perturbation_fraction);
    let opts = CgOptions { tol: cfg.tol, maxit: cfg.maxit };
    let window = scenario.window_steps();
    let mut problem = scenario.operator_problem()?;
    let mut records = Vec::new();
    let mut probe_hashes = Vec::new();
    let mut master = GaussianRng::new(seed);
    for rep in 0..cfg.repeats {
        let mut rng = master.fork();
        let mut truth = perturb(&scenario.background, amplitude, &mut rng);
        let mut x = perturb(&scenario.background, amplitude, &mut rng);
        for c in 0..cfg.cycles {
            let cycle = rep * cfg.cycles + c;
            truth = scenario.model.propagate(&truth, rng.int_in(1, window))?;
            let mut y = scenario.obs.apply(truth.as_slice());
            for yi in &mut y {
                *yi += noise_std * rng.standard();
            }
            problem.set_observations(y)?;
            let sys = problem.build_gn_system(&x)?;
            probe_hashes.push(probe_hash(&sys));
            let mut dx_ref = None;
            for (vi, v) in cfg.variants.iter().enumerate() {
                let (l, mu): (Box<dyn LinearOperator>, Option<f64>) = match &v.kind {
                    VariantKind::None => (Box::new(Identity(sys.dim())), None),
                    VariantKind::BHalf => (Box::new(b_half_preconditioner(&scenario.cov)), None),
                    VariantKind::ExactEigs { r, mu, tail_scale } => {
                        let eigs = exact_leading_eigs(&sys, *r, cfg.exact_dense_threshold)?;
                        let pairs = scale_tail(eigs.pairs, *tail_scale)?;
                        let m = mu.resolve(pairs.values());
                        (Box::new(split_l(pairs, m)?), Some(m))
                    }
                    VariantKind::Learned { checkpoint, r, mu, tail_scale } => {
                        let s = &surrogates[checkpoint];
                        match s.forward(&x) {
                            Ok(out) => {
                                let pairs = scale_tail(out.eigenpairs(*r)?, *tail_scale)?;
                                let m = mu.resolve(pairs.values());
                                (Box::new(split_l(pairs, m)?), Some(m))
                            }
                            Err(e @ Error::DegenerateOutput { .. }) => {
                                warn!("cycle {cycle}, {}: {e}; falling back to identity", v.label());
                                (Box::new(Identity(sys.dim())), None)
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                let (dx, report) = pcg_split(&sys, l.as_ref(), sys.rhs(), None, opts);
                if !report.converged() {
                    warn!("cycle {cycle}, {}: stopped by {} after {} iterations", v.label(), report.termination.as_str(), report.iterations);
                }
                info!("cycle {cycle} {}: {} iterations", v.label(), report.iterations);
                if vi == reference {
                    dx_ref = Some(dx);
                }
                records.push(SolveRecord { cycle, variant: labels[vi].clone(), report, mu });
            }
            drop(sys);
            let dx = dx_ref.expect("reference variant always runs");
            for (xi, d) in x.as_mut_slice().iter_mut().zip(&dx) {
                *xi += d;
            }
        }
    }
    let summary = report::summarize(&labels, &cfg.variants, &records);
    Ok(ExperimentReport { variants: labels, records, probe_hashes, summary })
}
