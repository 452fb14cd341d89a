//! Resumable (seed × λ) sweeps.
//!
//! Each cell is written to `cells/<cell hash>/seed-<s>_lambda-<λ>.json` as
//! soon as it finishes. A re-run skips every completed cell whose file
//! matches the current cell hash, so an interrupted sweep resumes where it
//! stopped and produces the same report as an uninterrupted one.

use std::path::{Path, PathBuf};

use maintcause_core::eval::{aggregate, run_cell, CellResult, EvalReport, ExperimentConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::report::write_report;
use crate::store::{read_json, write_json};

pub const CELLS_DIR: &str = "cells";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub cell: CellResult,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub threads: usize,
    /// Stop after computing this many new cells; no report is written
    /// while cells remain.
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub computed: usize,
    pub reused: usize,
    pub remaining: usize,
    pub report: Option<EvalReport>,
}

pub fn cell_path(out: &Path, cell_hash: &str, seed: u64, lambda: f64) -> PathBuf {
    out.join(CELLS_DIR).join(cell_hash).join(format!("seed-{seed}_lambda-{lambda}.json"))
}

fn load_complete(path: &Path, cell_hash: &str, seed: u64, lambda: f64) -> Option<CellResult> {
    if !path.exists() {
        return None;
    }
    match read_json::<CellFile>(path) {
        Ok(f)
            if f.schema_version == SCHEMA_VERSION
                && f.config_hash == cell_hash
                && f.seed == seed
                && f.lambda == lambda
                && f.cell.metrics().is_some() =>
        {
            Some(f.cell)
        }
        Ok(_) => None,
        Err(e) => {
            log::warn!("ignoring unreadable cell file: {e}");
            None
        }
    }
}

/// Runs or resumes the sweep described by `cfg` and, once every cell has
/// a result, writes the report and plot tables into `out`.
pub fn run(out: &Path, cfg: &ExperimentConfig, opts: SweepOptions) -> CliResult<SweepOutcome> {
    config::validate(cfg)?;
    let hash = config::hash(cfg);
    let cell_hash = config::cell_hash(cfg);
    let mut keys = Vec::new();
    for &lambda in &cfg.lambdas {
        for &seed in &cfg.seeds {
            if !keys.contains(&(seed, lambda)) {
                keys.push((seed, lambda));
            }
        }
    }

    let mut done = Vec::new();
    let mut todo = Vec::new();
    for &(seed, lambda) in &keys {
        match load_complete(&cell_path(out, &cell_hash, seed, lambda), &cell_hash, seed, lambda) {
            Some(c) => done.push(c),
            None => todo.push((seed, lambda)),
        }
    }
    let reused = done.len();
    let take = opts.max_cells.map_or(todo.len(), |m| m.min(todo.len()));
    let remaining = todo.len() - take;
    log::info!("sweep {hash}: {} cells, {reused} already complete, computing {take}", keys.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let computed: Vec<CliResult<CellResult>> = pool.install(|| {
        todo[..take]
            .par_iter()
            .map(|&(seed, lambda)| {
                let cell = run_cell(cfg, seed, lambda);
                match cell.metrics() {
                    Some(_) => log::info!("cell seed={seed} lambda={lambda} complete"),
                    None => log::warn!("cell seed={seed} lambda={lambda} failed: {:?}", cell.outcome),
                }
                let file = CellFile {
                    schema_version: SCHEMA_VERSION,
                    config_hash: cell_hash.clone(),
                    seed,
                    lambda,
                    cell: cell.clone(),
                };
                write_json(&cell_path(out, &cell_hash, seed, lambda), &file)?;
                Ok(cell)
            })
            .collect()
    });
    for c in computed {
        done.push(c?);
    }

    if remaining > 0 {
        log::info!("{remaining} cells left; re-run to continue");
        return Ok(SweepOutcome { computed: take, reused, remaining, report: None });
    }
    let report = aggregate(cfg, done);
    for (seed, lambda) in &report.incomplete {
        log::warn!("cell seed={seed} lambda={lambda} is incomplete");
    }
    write_report(out, &report, &hash)?;
    Ok(SweepOutcome { computed: take, reused, remaining, report: Some(report) })
}
