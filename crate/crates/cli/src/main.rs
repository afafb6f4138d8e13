//! `daprec`: command-line driver for the 4D-Var preconditioning testbed.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use da_precond::bench::{emit_report, run_experiment, VariantKind};
use da_precond::dataset::{read_shard, write_shards, TrainingSample};
use da_precond::krylov::{lanczos_extreme_eigs, ConditionEstimate};
use da_precond::linop::{Identity, LinearOperator, SplitPreconditioned};
use da_precond::precond::{b_half_preconditioner, exact_leading_eigs, split_l};
use da_precond::scenario::{Scenario, ScenarioConfig};
use da_precond::surrogate::{Surrogate, TrainOptions, TrainingCurve};
use da_precond::swmodel::{write_snapshot, StateVector};
use da_precond::Error;

#[derive(Parser, Debug)]
#[command(name = "daprec", version, about = "4D-Var testbed with learned spectral preconditioners for CG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (JSON); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Free run from rest; writes the final state and the background.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Steps of the free run (default: the spin-up length).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generates training and held-out shards.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Training states (overrides `dataset.n_samples`).
        #[arg(long)]
        n: Option<usize>,
        /// Probes per state (overrides `dataset.k`).
        #[arg(long)]
        k: Option<usize>,
        /// Shard size cap in bytes.
        #[arg(long)]
        max_shard_bytes: Option<u64>,
    },
    /// Trains the surrogate; writes `surrogate.surr` and `training_curve.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory with `train-*.pcds` and `heldout-*.pcds`; generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Extreme eigenvalues of `A_x` and of `L^T A_x L` per variant at the background.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Lanczos steps.
        #[arg(long, default_value_t = 60)]
        iters: usize,
    },
    /// Runs the paired experiment and writes CSV/JSON reports.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Cycles (overrides `experiment.cycles`).
        #[arg(long)]
        cycles: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
            Error::Json(j) => Error::Config(format!("invalid scenario {}: {j}", p.display())),
            other => other,
        })?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn field_stats(x: &StateVector) -> serde_json::Value {
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    json!({ "max_abs_eta": max_abs(x.eta()), "max_abs_u": max_abs(x.u()), "max_abs_v": max_abs(x.v()) })
}

fn simulate(common: &Common, steps: Option<usize>) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let steps = steps.unwrap_or(cfg.background.spinup_steps);
    let sc = Scenario::build(cfg.clone())?;
    let x = sc.model.propagate(&StateVector::zeros(cfg.grid), steps)?;
    write_snapshot(&x, common.out.join("final.swst"))?;
    write_snapshot(&sc.background, common.out.join("background.swst"))?;
    write_json(
        &common.out.join("simulate.json"),
        &json!({
            "steps": steps,
            "final": field_stats(&x),
            "background": field_stats(&sc.background),
            "climatology": { "mean": sc.climatology.mean, "std": sc.climatology.std },
            "mass_drift": x.total_mass(cfg.model.eta0) - StateVector::zeros(cfg.grid).total_mass(cfg.model.eta0),
        }),
    )
}

fn gen_data(common: &Common, n: Option<usize>, k: Option<usize>, max_bytes: Option<u64>) -> Result<(), Error> {
    let mut cfg = load_config(common)?;
    if let Some(n) = n {
        cfg.dataset.n_samples = n;
    }
    if let Some(k) = k {
        cfg.dataset.k = k;
    }
    cfg.validate()?;
    let max_bytes = max_bytes.or(cfg.dataset.max_shard_bytes);
    let sc = Scenario::build(cfg.clone())?;
    let (train, held) = sc.training_data()?;
    let a = write_shards(&train, &common.out, "train", max_bytes)?;
    let b = write_shards(&held, &common.out, "heldout", max_bytes)?;
    info!("wrote {} training and {} held-out shards", a.len(), b.len());
    write_json(
        &common.out.join("dataset.json"),
        &json!({
            "n": sc.n(),
            "k": cfg.dataset.k,
            "train_samples": train.len(),
            "held_out_samples": held.len(),
            "train_shards": a.len(),
            "held_out_shards": b.len(),
            "operator_applications": (train.len() + held.len()) * cfg.dataset.k,
        }),
    )
}

fn read_prefixed(dir: &Path, prefix: &str, sc: &Scenario) -> Result<Vec<TrainingSample>, Error> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(".pcds"))
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_shard(&p, sc.config.grid)?);
    }
    Ok(out)
}

fn train(common: &Common, data: Option<&Path>) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let sc = Scenario::build(cfg.clone())?;
    let (train, held) = match data {
        Some(dir) => (read_prefixed(dir, "train-", &sc)?, read_prefixed(dir, "heldout-", &sc)?),
        None => sc.training_data()?,
    };
    if train.is_empty() {
        return Err(Error::Config("no training samples found".into()));
    }
    let seeds = cfg.seeds();
    let mut s = Surrogate::new(sc.surrogate_config()?, seeds.init)?;
    let opts = TrainOptions { shuffle_seed: seeds.shuffle, ..cfg.training };
    let mut curve = TrainingCurve::default();
    let outcome = s.train(&train, &opts, &mut curve);
    s.save(common.out.join("surrogate.surr"))?;
    curve.save(common.out.join("training_curve.csv"))?;
    outcome?;
    let held_loss = if held.is_empty() { None } else { Some(s.evaluate(&held)?) };
    write_json(
        &common.out.join("train.json"),
        &json!({
            "parameters": s.param_count(),
            "r": s.rank(),
            "m_bound": s.config().m_bound,
            "steps": curve.points.len(),
            "final_batch_relative_loss": curve.points.last().map(|p| p.relative_loss),
            "held_out_loss": held_loss.map(|l| l.loss),
            "held_out_relative_loss": held_loss.map(|l| l.relative),
        }),
    )
}

fn condition(op: &dyn LinearOperator, iters: usize) -> serde_json::Value {
    let c: ConditionEstimate = lanczos_extreme_eigs(&op, iters.min(op.dim()));
    json!({ "lambda_max": c.lambda_max, "lambda_min": c.lambda_min, "kappa": c.kappa, "lanczos_steps": c.iterations })
}

fn spectrum(common: &Common, iters: usize) -> Result<(), Error> {
    let cfg = load_config(common)?;
    let sc = Scenario::build(cfg.clone())?;
    let p = sc.operator_problem()?;
    let sys = p.build_gn_system(&sc.background)?;
    let mut rows = vec![json!({ "variant": "operator", "estimate": condition(&sys, iters) })];
    for v in &cfg.experiment.variants {
        let l: Box<dyn LinearOperator> = match &v.kind {
            VariantKind::None => Box::new(Identity(sys.dim())),
            VariantKind::BHalf => Box::new(b_half_preconditioner(&sc.cov)),
            VariantKind::ExactEigs { r, mu, .. } => {
                let e = exact_leading_eigs(&sys, *r, cfg.experiment.exact_dense_threshold)?;
                let m = mu.resolve(e.pairs.values());
                Box::new(split_l(e.pairs, m)?)
            }
            VariantKind::Learned { checkpoint, r, mu, .. } => match Surrogate::load(checkpoint) {
                Ok(s) => Box::new(s.build_preconditioner(&sc.background, *mu, *r)?),
                Err(e) => {
                    warn!("skipping {}: {e}", v.label());
                    continue;
                }
            },
        };
        let pre = SplitPreconditioned { a: &sys, l: l.as_ref() };
        rows.push(json!({ "variant": v.label(), "estimate": condition(&pre, iters) }));
    }
    write_json(&common.out.join("spectrum.json"), &json!({ "n": sc.n(), "spectra": rows }))
}

fn bench(common: &Common, cycles: Option<usize>) -> Result<(), Error> {
    let mut cfg = load_config(common)?;
    if let Some(c) = cycles {
        cfg.experiment.cycles = c;
    }
    cfg.validate()?;
    let sc = Scenario::build(cfg.clone())?;
    let report = run_experiment(&sc, &cfg.experiment, cfg.seeds().experiment)?;
    emit_report(&report, &common.out)?;
    for s in &report.summary {
        println!(
            "{:<20} median {:>7.1}  mean {:>7.1}  reduction {}",
            s.name,
            s.median_iterations,
            s.mean_iterations,
            s.reduction_percent.map_or("n/a".into(), |r| format!("{r:.1}%"))
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, steps } => simulate(common, *steps),
        Command::GenData { common, n, k, max_shard_bytes } => gen_data(common, *n, *k, *max_shard_bytes),
        Command::Train { common, data } => train(common, data.as_deref()),
        Command::Spectrum { common, iters } => spectrum(common, *iters),
        Command::Bench { common, cycles } => bench(common, *cycles),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
