//! Argument parsing and the five subcommands.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use maintcause_core::datagen::{generate_dataset, OutcomeKind};
use maintcause_core::domain::{Contract, Split};
use maintcause_core::estimators::{EstimatorKind, FittedEstimator, OutcomeEstimator};
use maintcause_core::eval::{aggregate, evaluate_cell, fit_estimator, CellOutcome, CellResult, ExperimentConfig};
use maintcause_core::policy::{prescribe, PolicyName};
use rayon::prelude::*;

use crate::config;
use crate::error::{CliError, CliResult};
use crate::models::{self, CHECKPOINT_DIR};
use crate::report::{write_prescriptions, write_report, PRESCRIPTIONS_FILE};
use crate::store::{load_dataset, save_dataset, Meta};
use crate::sweep::{self, SweepOptions};

pub const DEFAULT_DIR: &str = "run";

#[derive(Debug, Parser)]
#[command(
    name = "maintcause",
    version,
    about = "PM-frequency causal benchmark: data, estimators, prescriptions, sweeps"
)]
pub struct Cli {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed list with a single seed.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory (default `run`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    Mlp,
    Scigan,
    All,
}

impl EstimatorChoice {
    fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorChoice::Mlp => vec![EstimatorKind::Mlp],
            EstimatorChoice::Scigan => vec![EstimatorKind::Scigan],
            EstimatorChoice::All => EstimatorKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset: contracts.csv, oracle.bin and meta.json.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Train estimators for both outcomes on a generated dataset.
    Train {
        #[arg(long, value_enum, default_value = "all")]
        estimator: EstimatorChoice,
        /// Dataset directory (defaults to the output directory).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Prescribe PM frequencies for the test contracts.
    Prescribe {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Policies to run, comma separated (default: the config's list).
        #[arg(long, value_delimiter = ',')]
        policy: Vec<String>,
        /// Restrict to one named cost setting.
        #[arg(long)]
        cost_setting: Option<String>,
    },
    /// Score trained estimators and all policies against the oracle.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Run or resume the full (seed × λ) matrix.
    Sweep {
        /// Stop after this many newly computed cells.
        #[arg(long)]
        max_cells: Option<usize>,
    },
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Generate { n, lambda } => generate(cli, out.unwrap_or_else(|| DEFAULT_DIR.into()), *n, *lambda),
        Command::Train { estimator, data } => {
            let (data, out) = dirs(data, out);
            train(cli, &data, &out, *estimator)
        }
        Command::Prescribe { data, policy, cost_setting } => {
            let (data, out) = dirs(data, out);
            prescribe_cmd(cli, &data, &out, policy, cost_setting.as_deref())
        }
        Command::Evaluate { data } => {
            let (data, out) = dirs(data, out);
            evaluate(cli, &data, &out)
        }
        Command::Sweep { max_cells } => {
            let mut cfg = config::load(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let opts = SweepOptions { threads: config::threads()?, max_cells: *max_cells };
            let outcome = sweep::run(&out.unwrap_or_else(|| DEFAULT_DIR.into()), &cfg, opts)?;
            if let Some(r) = &outcome.report {
                if r.incomplete.len() == r.cells.len() {
                    return Err(CliError::Training("every sweep cell failed".into()));
                }
            }
            Ok(())
        }
    }
}

/// `--data` and `--out` default to each other, then to `run`.
fn dirs(data: &Option<PathBuf>, out: Option<PathBuf>) -> (PathBuf, PathBuf) {
    let data = data.clone().or_else(|| out.clone()).unwrap_or_else(|| DEFAULT_DIR.into());
    let out = out.unwrap_or_else(|| data.clone());
    (data, out)
}

fn generate(cli: &Cli, out: PathBuf, n: Option<usize>, lambda: Option<f64>) -> CliResult<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(n) = n {
        cfg.n = n;
    }
    match lambda {
        Some(l) => cfg.lambdas = vec![l],
        None => cfg.lambdas.truncate(1),
    }
    match cli.seed {
        Some(s) => cfg.seeds = vec![s],
        None => cfg.seeds.truncate(1),
    }
    config::validate(&cfg)?;
    let hash = config::hash(&cfg);
    let grid = cfg.treatment_grid().map_err(CliError::config)?;
    let (ds, oracle) = generate_dataset(cfg.n, cfg.lambdas[0], cfg.seeds[0], &grid).map_err(CliError::config)?;
    save_dataset(&out, &ds, &oracle, &cfg, &hash)?;
    log::info!("wrote {} contracts to {}", ds.contracts.len(), out.display());
    Ok(())
}

/// The dataset's own config unless `--config` replaces it.
fn effective_config(cli: &Cli, meta: &Meta) -> CliResult<ExperimentConfig> {
    let cfg = match &cli.config {
        Some(p) => config::load(Some(p))?,
        None => meta.config.clone(),
    };
    config::validate(&cfg)?;
    Ok(cfg)
}

fn train(cli: &Cli, data: &Path, out: &Path, choice: EstimatorChoice) -> CliResult<()> {
    let (ds, _, meta) = load_dataset(data)?;
    let cfg = effective_config(cli, &meta)?;
    let hash = config::hash(&cfg);
    let seed = cli.seed.unwrap_or(meta.seed);
    let jobs: Vec<(EstimatorKind, OutcomeKind)> =
        choice.kinds().into_iter().flat_map(|k| OutcomeKind::ALL.map(|o| (k, o))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config::threads()?)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let fitted: Vec<Result<FittedEstimator, CliError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, o)| {
                log::info!("training {}/{}", k.as_str(), o.as_str());
                fit_estimator(&ds, k, o, &cfg.estimator, seed)
                    .map_err(|e| CliError::Training(format!("{}/{}: {e}", k.as_str(), o.as_str())))
            })
            .collect()
    });
    let dir = out.join(CHECKPOINT_DIR);
    for est in fitted {
        let est = est?;
        let trained_with = cfg.estimator.reseeded(seed, est.kind, est.outcome);
        models::save(&dir, &est, cfg.grid, &trained_with, &hash, seed)?;
    }
    Ok(())
}

fn prescribe_cmd(cli: &Cli, data: &Path, out: &Path, policies: &[String], setting: Option<&str>) -> CliResult<()> {
    let (ds, oracle, meta) = load_dataset(data)?;
    let cfg = effective_config(cli, &meta)?;
    let hash = config::hash(&cfg);
    let grid = cfg.treatment_grid().map_err(CliError::config)?;
    let policies: Vec<PolicyName> = if policies.is_empty() {
        cfg.policies.clone()
    } else {
        policies.iter().map(|p| PolicyName::parse(p).map_err(CliError::config)).collect::<CliResult<_>>()?
    };
    let settings: Vec<_> = match setting {
        Some(name) => {
            let s = cfg.cost_settings.iter().find(|s| s.name == name);
            vec![s.ok_or_else(|| CliError::Config(format!("no cost setting named `{name}`")))?.clone()]
        }
        None => cfg.cost_settings.clone(),
    };

    let ckpt = data.join(CHECKPOINT_DIR);
    let mut loaded: Vec<(EstimatorKind, FittedEstimator, FittedEstimator)> = Vec::new();
    for kind in policies.iter().filter_map(|p| p.estimator()) {
        if loaded.iter().all(|(k, _, _)| *k != kind) {
            let (eo, _) = models::load(&ckpt, kind, OutcomeKind::Overhauls, cfg.grid)?;
            let (ef, _) = models::load(&ckpt, kind, OutcomeKind::Failures, cfg.grid)?;
            loaded.push((kind, eo, ef));
        }
    }

    let test: Vec<&Contract> = ds.split(Split::Test).collect();
    let mut rows = Vec::new();
    for s in &settings {
        for &policy in &policies {
            let models = policy.estimator().and_then(|kind| {
                loaded
                    .iter()
                    .find(|(k, _, _)| *k == kind)
                    .map(|(_, o, f)| (o as &dyn OutcomeEstimator, f as &dyn OutcomeEstimator))
            });
            let mut ps = prescribe(policy, models, &oracle, &test, &s.costs, &grid).map_err(CliError::data)?;
            maintcause_core::eval::attach_true_costs(&mut ps, &oracle, &test, &s.costs, &grid)
                .map_err(CliError::data)?;
            rows.push((s.name.clone(), ps));
        }
    }
    write_prescriptions(&out.join(PRESCRIPTIONS_FILE), &rows, &hash, meta.seed)
}

fn evaluate(cli: &Cli, data: &Path, out: &Path) -> CliResult<()> {
    let (ds, oracle, meta) = load_dataset(data)?;
    let mut cfg = effective_config(cli, &meta)?;
    cfg.seeds = vec![meta.seed];
    cfg.lambdas = vec![meta.lambda];
    let hash = config::hash(&cfg);
    let est = models::load_cell(&data.join(CHECKPOINT_DIR), cfg.grid)?;
    let metrics = evaluate_cell(&ds, &oracle, &est, &cfg).map_err(CliError::data)?;
    let cell = CellResult { seed: meta.seed, lambda: meta.lambda, outcome: CellOutcome::Complete(metrics) };
    write_report(out, &aggregate(&cfg, vec![cell]), &hash)
}
