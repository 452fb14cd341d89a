//! Dataset files: `contracts.csv`, `oracle.bin` and `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use maintcause_core::datagen::{BiasModel, ContractNoise, Oracle, OracleRecord, TrueOutcomeModel};
use maintcause_core::domain::{
    encode_features, Contract, ContractId, Covariates, Dataset, DatasetMeta, Split, TreatmentGrid,
};
use maintcause_core::eval::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};

pub const CONTRACTS_FILE: &str = "contracts.csv";
pub const ORACLE_FILE: &str = "oracle.bin";
pub const META_FILE: &str = "meta.json";

const ORACLE_MAGIC: &[u8; 8] = b"MCORACLE";

#[derive(Debug, Serialize, Deserialize)]
struct ContractRow {
    schema_version: u32,
    config_hash: String,
    seed: u64,
    id: u64,
    machine_type: u8,
    age_at_start: f64,
    hours_at_start: f64,
    hours_during: f64,
    avg_hours_per_year: f64,
    contract_type: u8,
    duration_days: f64,
    split: Split,
    t: f64,
    o: f64,
    f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub n: usize,
    pub split_counts: SplitCounts,
    pub dataset: DatasetMeta,
    pub config: ExperimentConfig,
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so
/// readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    let tmp = path.with_file_name(name);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::data)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn save_dataset(
    dir: &Path,
    ds: &Dataset,
    oracle: &Oracle,
    cfg: &ExperimentConfig,
    config_hash: &str,
) -> CliResult<()> {
    let seed = ds.meta.seed;
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &ds.contracts {
        let cov = &c.covariates;
        let split = ds.split_of(c.id).ok_or_else(|| CliError::Data(format!("contract {} has no split", c.id)))?;
        w.serialize(ContractRow {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.into(),
            seed,
            id: c.id.0,
            machine_type: cov.machine_type,
            age_at_start: cov.age_at_start,
            hours_at_start: cov.hours_at_start,
            hours_during: cov.hours_during,
            avg_hours_per_year: cov.avg_hours_per_year,
            contract_type: cov.contract_type,
            duration_days: cov.duration_days,
            split,
            t: c.pm_freq,
            o: c.overhauls,
            f: c.failures,
        })
        .map_err(CliError::data)?;
    }
    let bytes = w.into_inner().map_err(CliError::data)?;
    write_atomic(&dir.join(CONTRACTS_FILE), &bytes)?;
    write_atomic(&dir.join(ORACLE_FILE), &encode_oracle(oracle, config_hash))?;

    let count = |s| ds.split(s).count();
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.into(),
        seed,
        lambda: ds.meta.lambda,
        n: ds.meta.n,
        split_counts: SplitCounts { train: count(Split::Train), valid: count(Split::Valid), test: count(Split::Test) },
        dataset: ds.meta.clone(),
        config: cfg.clone(),
    };
    write_json(&dir.join(META_FILE), &meta)
}

/// Reads the three dataset files back. Features are re-encoded from the
/// raw covariates with the stored standardization.
pub fn load_dataset(dir: &Path) -> CliResult<(Dataset, Oracle, Meta)> {
    let meta: Meta = read_json(&dir.join(META_FILE))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(CliError::Data(format!("meta.json schema version {} is not supported", meta.schema_version)));
    }
    let path = dir.join(CONTRACTS_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut contracts = Vec::new();
    let mut split_labels = BTreeMap::new();
    for row in r.deserialize() {
        let row: ContractRow = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if row.schema_version != SCHEMA_VERSION || row.config_hash != meta.config_hash || row.seed != meta.seed {
            return Err(CliError::Data(format!("{}: row {} does not belong to this dataset", path.display(), row.id)));
        }
        let covariates = Covariates {
            machine_type: row.machine_type,
            age_at_start: row.age_at_start,
            hours_at_start: row.hours_at_start,
            hours_during: row.hours_during,
            avg_hours_per_year: row.avg_hours_per_year,
            contract_type: row.contract_type,
            duration_days: row.duration_days,
        };
        let features = encode_features(&covariates, &meta.dataset.standardization).map_err(CliError::data)?;
        let id = ContractId(row.id);
        split_labels.insert(id, row.split);
        contracts.push(Contract { id, covariates, features, pm_freq: row.t, overhauls: row.o, failures: row.f });
    }
    let ds = Dataset { contracts, split_labels, meta: meta.dataset.clone() };
    ds.validate().map_err(CliError::data)?;
    if ds.contracts.len() != meta.n {
        return Err(CliError::Data(format!("{} rows, meta.json says {}", ds.contracts.len(), meta.n)));
    }

    let path = dir.join(ORACLE_FILE);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let (oracle, hash) = decode_oracle(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if hash != meta.config_hash || oracle.seed != meta.seed {
        return Err(CliError::Data(format!("{} belongs to a different dataset", path.display())));
    }
    for c in &ds.contracts {
        if oracle.split_of(c.id) != ds.split_of(c.id) {
            return Err(CliError::Data(format!("oracle and contracts disagree on contract {}", c.id)));
        }
    }
    Ok((ds, oracle, meta))
}

fn split_code(s: Split) -> u8 {
    match s {
        Split::Train => 0,
        Split::Valid => 1,
        Split::Test => 2,
    }
}

/// Little-endian layout: magic, version, config hash, seed, λ, grid,
/// weight vectors, then one record per contract.
pub fn encode_oracle(o: &Oracle, config_hash: &str) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(ORACLE_MAGIC);
    b.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    b.extend_from_slice(&(config_hash.len() as u32).to_le_bytes());
    b.extend_from_slice(config_hash.as_bytes());
    b.extend_from_slice(&o.seed.to_le_bytes());
    b.extend_from_slice(&o.bias.lambda.to_le_bytes());
    b.extend_from_slice(&o.grid.t_max().to_le_bytes());
    b.extend_from_slice(&o.grid.step().to_le_bytes());
    let m = &o.model;
    b.extend_from_slice(&(m.v_o.len() as u32).to_le_bytes());
    for v in [&m.v_o, &m.w_o, &m.v_f, &m.w_f, &o.bias.w_b] {
        for x in v.iter() {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    b.extend_from_slice(&(o.records.len() as u64).to_le_bytes());
    for (id, r) in &o.records {
        b.extend_from_slice(&id.0.to_le_bytes());
        b.push(split_code(r.split));
        b.extend_from_slice(&r.noise.eps_o.to_le_bytes());
        b.extend_from_slice(&r.noise.eps_f.to_le_bytes());
    }
    b
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Inverse of [`encode_oracle`]; returns the oracle and the embedded hash.
pub fn decode_oracle(bytes: &[u8]) -> Result<(Oracle, String), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != ORACLE_MAGIC {
        return Err("not an oracle file".into());
    }
    let version = c.u32()?;
    if version != SCHEMA_VERSION {
        return Err(format!("unsupported oracle version {version}"));
    }
    let hash_len = c.u32()? as usize;
    let hash = String::from_utf8(c.take(hash_len)?.to_vec()).map_err(|e| e.to_string())?;
    let seed = c.u64()?;
    let lambda = c.f64()?;
    let t_max = c.f64()?;
    let step = c.f64()?;
    let d = c.u32()? as usize;
    let model = TrueOutcomeModel { v_o: c.f64s(d)?, w_o: c.f64s(d)?, v_f: c.f64s(d)?, w_f: c.f64s(d)? };
    let bias = BiasModel { w_b: c.f64s(d)?, lambda };
    let grid = TreatmentGrid::new(t_max, step).map_err(|e| e.to_string())?;
    let count = c.u64()?;
    let mut records = BTreeMap::new();
    for _ in 0..count {
        let id = ContractId(c.u64()?);
        let split = match c.u8()? {
            0 => Split::Train,
            1 => Split::Valid,
            2 => Split::Test,
            k => return Err(format!("bad split code {k}")),
        };
        let noise = ContractNoise { eps_o: c.f64()?, eps_f: c.f64()? };
        records.insert(id, OracleRecord { split, noise });
    }
    if c.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok((Oracle { seed, model, bias, grid, records }, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use maintcause_core::datagen::generate_dataset;

    #[test]
    fn oracle_encoding_round_trips_and_rejects_damage() {
        let (_, oracle) = generate_dataset(40, 10.0, 3, &TreatmentGrid::default()).unwrap();
        let bytes = encode_oracle(&oracle, "abc");
        let (back, hash) = decode_oracle(&bytes).unwrap();
        assert_eq!(back, oracle);
        assert_eq!(hash, "abc");
        assert!(decode_oracle(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_oracle(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_oracle(&bad).is_err());
    }
}
