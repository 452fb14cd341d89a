//! Estimator checkpoints and their training histories.

use std::path::{Path, PathBuf};

use maintcause_core::datagen::OutcomeKind;
use maintcause_core::domain::GridSpec;
use maintcause_core::estimators::{EstimatorCheckpoint, EstimatorConfig, EstimatorKind, FittedEstimator};
use maintcause_core::eval::CellEstimators;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use crate::report::headed_writer;
use crate::store::{read_json, write_atomic, write_json};

pub const CHECKPOINT_DIR: &str = "checkpoints";

/// JSON document around one estimator checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint: EstimatorCheckpoint,
}

#[derive(Debug, Serialize)]
struct HistoryRow {
    schema_version: u32,
    config_hash: String,
    seed: u64,
    epoch: usize,
    train_mse: f64,
    valid_mse: f64,
}

pub fn checkpoint_path(dir: &Path, kind: EstimatorKind, outcome: OutcomeKind) -> PathBuf {
    dir.join(format!("{}_{}.json", kind.as_str(), outcome.as_str()))
}

pub fn history_path(dir: &Path, kind: EstimatorKind, outcome: OutcomeKind) -> PathBuf {
    dir.join(format!("{}_{}.history.csv", kind.as_str(), outcome.as_str()))
}

/// Writes the checkpoint and a per-epoch history CSV of the selected
/// trial (validation MSE on observed outcomes).
pub fn save(
    dir: &Path,
    est: &FittedEstimator,
    grid: GridSpec,
    cfg: &EstimatorConfig,
    config_hash: &str,
    seed: u64,
) -> CliResult<()> {
    let file = CheckpointFile {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.into(),
        seed,
        checkpoint: est.to_checkpoint(grid, cfg),
    };
    write_json(&checkpoint_path(dir, est.kind, est.outcome), &file)?;
    let mut w = headed_writer(&["schema_version", "config_hash", "seed", "epoch", "train_mse", "valid_mse"])?;
    for r in &est.history.epochs {
        w.serialize(HistoryRow {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.into(),
            seed,
            epoch: r.epoch,
            train_mse: r.train_loss,
            valid_mse: r.valid_loss,
        })
        .map_err(CliError::data)?;
    }
    write_atomic(&history_path(dir, est.kind, est.outcome), &w.into_inner().map_err(CliError::data)?)
}

pub fn load(
    dir: &Path,
    kind: EstimatorKind,
    outcome: OutcomeKind,
    grid: GridSpec,
) -> CliResult<(FittedEstimator, CheckpointFile)> {
    let path = checkpoint_path(dir, kind, outcome);
    let file: CheckpointFile = read_json(&path)?;
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    if file.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("schema version {} is not supported", file.schema_version)));
    }
    let ck = &file.checkpoint;
    if ck.kind != kind || ck.outcome != outcome {
        return Err(bad(format!("holds {}/{}", ck.kind.as_str(), ck.outcome.as_str())));
    }
    if ck.grid != grid {
        return Err(bad(format!("trained for grid {:?}, config uses {:?}", ck.grid, grid)));
    }
    let est = FittedEstimator::from_checkpoint(ck).map_err(|e| bad(e.to_string()))?;
    Ok((est, file))
}

pub fn load_cell(dir: &Path, grid: GridSpec) -> CliResult<CellEstimators> {
    let get = |k, o| load(dir, k, o, grid).map(|(e, _)| e);
    Ok(CellEstimators {
        mlp_overhauls: get(EstimatorKind::Mlp, OutcomeKind::Overhauls)?,
        mlp_failures: get(EstimatorKind::Mlp, OutcomeKind::Failures)?,
        scigan_overhauls: get(EstimatorKind::Scigan, OutcomeKind::Overhauls)?,
        scigan_failures: get(EstimatorKind::Scigan, OutcomeKind::Failures)?,
    })
}
