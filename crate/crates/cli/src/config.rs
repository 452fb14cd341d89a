//! Experiment configuration files, command-line overrides and hashing.

use std::fs;
use std::path::Path;

use maintcause_core::eval::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Version written as the leading field of every file this crate emits.
pub const SCHEMA_VERSION: u32 = 1;

pub const THREADS_ENV: &str = "MAINTCAUSE_THREADS";

/// Reads a JSON config, or the built-in defaults when `path` is `None`.
/// Unknown fields are rejected.
pub fn load(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<ExperimentConfig, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let cfg: ExperimentConfig = serde_json::from_value(value.clone())?;
    // Round-trip to catch misspelled keys that serde would otherwise ignore.
    let known = serde_json::to_value(&cfg)?;
    if let Some(extra) = first_unknown_key(&value, &known, "") {
        return Err(serde::de::Error::custom(format!("unknown field `{extra}`")));
    }
    Ok(cfg)
}

fn first_unknown_key(given: &serde_json::Value, known: &serde_json::Value, prefix: &str) -> Option<String> {
    let (serde_json::Value::Object(g), serde_json::Value::Object(k)) = (given, known) else {
        return None;
    };
    for (key, v) in g {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => return Some(path),
            Some(kv) => {
                if let Some(p) = first_unknown_key(v, kv, &path) {
                    return Some(p);
                }
            }
        }
    }
    None
}

pub fn validate(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate().map_err(CliError::config)
}

/// Short SHA-256 digest of the canonical JSON form of `cfg`.
pub fn hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Hash identifying a single sweep cell's inputs: the config without its
/// seed and λ lists, so growing a sweep keeps finished cells valid.
pub fn cell_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.seeds.clear();
    c.lambdas.clear();
    hash(&c)
}

/// Worker count from `MAINTCAUSE_THREADS`, else the available cores.
pub fn threads() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}
