//! Evaluation reports, plot-data tables and prescription tables.

use std::path::Path;

use maintcause_core::eval::{EvalReport, Metric};
use maintcause_core::policy::Prescription;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use crate::store::{write_atomic, write_json};

pub const REPORT_FILE: &str = "report.json";
pub const PRESCRIPTIONS_FILE: &str = "prescriptions.csv";
pub const PLOT_FILES: [(Metric, &str); 3] =
    [(Metric::Mise, "mise_vs_lambda.csv"), (Metric::Pe, "pe_vs_lambda.csv"), (Metric::Pcr, "pcr_vs_lambda.csv")];

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub report: EvalReport,
}

#[derive(Debug, Serialize)]
struct TrendCsvRow<'a> {
    schema_version: u32,
    config_hash: &'a str,
    seeds: &'a str,
    lambda: f64,
    policy_or_model: &'a str,
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize)]
struct PrescriptionCsvRow<'a> {
    schema_version: u32,
    config_hash: &'a str,
    seed: u64,
    cost_setting: &'a str,
    id: u64,
    policy: &'a str,
    prescribed_t: f64,
    estimated_cost: f64,
    true_cost: Option<f64>,
}

fn seeds_label(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

/// In-memory CSV writer with its header already written, so empty tables
/// still carry one.
pub fn headed_writer(header: &[&str]) -> CliResult<csv::Writer<Vec<u8>>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(CliError::data)?;
    Ok(w)
}

/// Writes `report.json` and the three metric-versus-λ tables into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport, config_hash: &str) -> CliResult<()> {
    report.validate().map_err(CliError::data)?;
    let file = ReportFile {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.into(),
        seeds: report.seeds.clone(),
        report: report.clone(),
    };
    write_json(&dir.join(REPORT_FILE), &file)?;
    let seeds = seeds_label(&report.seeds);
    for (metric, name) in PLOT_FILES {
        let mut w =
            headed_writer(&["schema_version", "config_hash", "seeds", "lambda", "policy_or_model", "mean", "std"])?;
        for row in report.trend(metric) {
            w.serialize(TrendCsvRow {
                schema_version: SCHEMA_VERSION,
                config_hash,
                seeds: &seeds,
                lambda: row.lambda,
                policy_or_model: &row.policy_or_model,
                mean: row.mean,
                std: row.std,
            })
            .map_err(CliError::data)?;
        }
        write_atomic(&dir.join(name), &w.into_inner().map_err(CliError::data)?)?;
    }
    Ok(())
}

pub fn write_prescriptions(
    path: &Path,
    rows: &[(String, Vec<Prescription>)],
    config_hash: &str,
    seed: u64,
) -> CliResult<()> {
    let mut w = headed_writer(&[
        "schema_version",
        "config_hash",
        "seed",
        "cost_setting",
        "id",
        "policy",
        "prescribed_t",
        "estimated_cost",
        "true_cost",
    ])?;
    for (setting, ps) in rows {
        for p in ps {
            w.serialize(PrescriptionCsvRow {
                schema_version: SCHEMA_VERSION,
                config_hash,
                seed,
                cost_setting: setting,
                id: p.id.0,
                policy: p.policy.as_str(),
                prescribed_t: p.prescribed_t,
                estimated_cost: p.estimated_cost,
                true_cost: p.true_cost,
            })
            .map_err(CliError::data)?;
        }
    }
    write_atomic(path, &w.into_inner().map_err(CliError::data)?)
}
