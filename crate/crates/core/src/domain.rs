//! Core data model: covariates, encoded features, contracts, cost
//! parameters, the treatment grid and datasets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub const MACHINE_TYPES: u8 = 7;
pub const CONTRACT_TYPES: u8 = 2;
pub const NUMERIC_COLUMNS: usize = 5;
/// Encoded feature dimension: one-hot machine type, one-hot contract type,
/// then the five standardized numeric columns.
pub const FEATURE_DIM: usize = MACHINE_TYPES as usize + CONTRACT_TYPES as usize + NUMERIC_COLUMNS;

/// Upper bound on PM events per running period.
pub const PM_FREQ_MAX: f64 = 20.0;

pub const AGE_RANGE: (f64, f64) = (0.0, 39.0);
pub const HOURS_AT_START_RANGE: (f64, f64) = (2_500.0, 110_000.0);
pub const HOURS_DURING_RANGE: (f64, f64) = (0.0, 186_000.0);
pub const AVG_HOURS_PER_YEAR_RANGE: (f64, f64) = (300.0, 8_500.0);
pub const DURATION_DAYS_RANGE: (f64, f64) = (180.0, 5_850.0);

pub const NUMERIC_NAMES: [&str; NUMERIC_COLUMNS] =
    ["age_at_start", "hours_at_start", "hours_during", "avg_hours_per_year", "duration_days"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Raw machine and contract characteristics of one contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub machine_type: u8,
    pub age_at_start: f64,
    pub hours_at_start: f64,
    pub hours_during: f64,
    pub avg_hours_per_year: f64,
    pub contract_type: u8,
    pub duration_days: f64,
}

impl Covariates {
    pub fn numeric(&self) -> [f64; NUMERIC_COLUMNS] {
        [self.age_at_start, self.hours_at_start, self.hours_during, self.avg_hours_per_year, self.duration_days]
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MACHINE_TYPES).contains(&self.machine_type) {
            return Err(Error::UnknownLevel { field: "machine_type", value: self.machine_type });
        }
        if !(1..=CONTRACT_TYPES).contains(&self.contract_type) {
            return Err(Error::UnknownLevel { field: "contract_type", value: self.contract_type });
        }
        let ranges =
            [AGE_RANGE, HOURS_AT_START_RANGE, HOURS_DURING_RANGE, AVG_HOURS_PER_YEAR_RANGE, DURATION_DAYS_RANGE];
        for ((value, (lo, hi)), name) in self.numeric().into_iter().zip(ranges).zip(NUMERIC_NAMES) {
            if !(lo..=hi).contains(&value) {
                return Err(Error::invalid(format!("{name} = {value} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Per-column mean and standard deviation of the numeric covariates,
/// estimated on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub means: [f64; NUMERIC_COLUMNS],
    pub stds: [f64; NUMERIC_COLUMNS],
}

impl StandardizationStats {
    /// Population (1/n) mean and standard deviation per numeric column.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Covariates>) -> Result<Self> {
        let rows: Vec<[f64; NUMERIC_COLUMNS]> = rows.into_iter().map(Covariates::numeric).collect();
        if rows.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let n = rows.len() as f64;
        let mut means = [0.0; NUMERIC_COLUMNS];
        let mut stds = [0.0; NUMERIC_COLUMNS];
        for j in 0..NUMERIC_COLUMNS {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::DegenerateColumn { column: NUMERIC_NAMES[j] });
            }
            means[j] = m;
            stds[j] = math::sqrt(var);
        }
        Ok(Self { means, stds })
    }

    fn check(&self) -> Result<()> {
        for (j, s) in self.stds.iter().enumerate() {
            if !(*s > 0.0) || !s.is_finite() {
                return Err(Error::DegenerateColumn { column: NUMERIC_NAMES[j] });
            }
        }
        Ok(())
    }
}

/// Encoded model input: dummy blocks followed by standardized numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Full one-hot encoding of the categoricals plus z-scored numerics.
pub fn encode_features(c: &Covariates, stats: &StandardizationStats) -> Result<FeatureVector> {
    if !(1..=MACHINE_TYPES).contains(&c.machine_type) {
        return Err(Error::UnknownLevel { field: "machine_type", value: c.machine_type });
    }
    if !(1..=CONTRACT_TYPES).contains(&c.contract_type) {
        return Err(Error::UnknownLevel { field: "contract_type", value: c.contract_type });
    }
    stats.check()?;
    let mut v = Vec::with_capacity(FEATURE_DIM);
    v.extend((1..=MACHINE_TYPES).map(|k| if k == c.machine_type { 1.0 } else { 0.0 }));
    v.extend((1..=CONTRACT_TYPES).map(|k| if k == c.contract_type { 1.0 } else { 0.0 }));
    for ((x, m), s) in c.numeric().iter().zip(&stats.means).zip(&stats.stds) {
        v.push((x - m) / s);
    }
    Ok(FeatureVector(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: ContractId,
    pub covariates: Covariates,
    pub features: FeatureVector,
    /// Observed PM events per running period.
    pub pm_freq: f64,
    /// Observed overhauls per running period.
    pub overhauls: f64,
    /// Observed failures per running period.
    pub failures: f64,
}

impl Contract {
    pub fn validate(&self) -> Result<()> {
        self.covariates.validate()?;
        if !(0.0..=PM_FREQ_MAX).contains(&self.pm_freq) {
            return Err(Error::invalid(format!("contract {}: pm_freq {} outside [0, 20]", self.id, self.pm_freq)));
        }
        for (name, v) in [("overhauls", self.overhauls), ("failures", self.failures)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("contract {}: {name} = {v}", self.id)));
            }
        }
        Ok(())
    }
}

/// Unit costs of a PM event, an overhaul and a failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c_pm: f64,
    pub c_overhaul: f64,
    pub c_failure: f64,
}

impl Default for CostParams {
    /// Average per-event costs of the reference fleet (rescaled currency units).
    fn default() -> Self {
        Self { c_pm: 73.0, c_overhaul: 207.0, c_failure: 104.0 }
    }
}

impl CostParams {
    pub fn scaled(&self, alpha: f64) -> Self {
        Self { c_pm: self.c_pm * alpha, c_overhaul: self.c_overhaul * alpha, c_failure: self.c_failure * alpha }
    }

    /// Configured costs must be finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("c_pm", self.c_pm), ("c_overhaul", self.c_overhaul), ("c_failure", self.c_failure)] {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// Cost per running period of `t` PM events, `o` overhauls and `f` failures.
pub fn total_cost(t: f64, o: f64, f: f64, cp: &CostParams) -> Result<f64> {
    if !(t >= 0.0 && o >= 0.0 && f >= 0.0) {
        return Err(Error::invalid(format!("total_cost needs t, o, f >= 0 (got {t}, {o}, {f})")));
    }
    Ok(cp.c_pm * t + cp.c_overhaul * o + cp.c_failure * f)
}

/// Uniform discretization of the PM-frequency range, starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct TreatmentGrid {
    t_max: f64,
    step: f64,
    points: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_max: PM_FREQ_MAX, step: 0.1 }
    }
}

impl TryFrom<GridSpec> for TreatmentGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        TreatmentGrid::new(spec.t_max, spec.step)
    }
}

impl From<TreatmentGrid> for GridSpec {
    fn from(g: TreatmentGrid) -> Self {
        GridSpec { t_max: g.t_max, step: g.step }
    }
}

impl Default for TreatmentGrid {
    fn default() -> Self {
        Self::new(PM_FREQ_MAX, 0.1).expect("default grid is valid")
    }
}

impl TreatmentGrid {
    /// `t_max` must be a whole number of steps (within 1e-9 relative).
    pub fn new(t_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::invalid(format!("grid needs t_max > 0 and step > 0, got {t_max}, {step}")));
        }
        let k = math::round(t_max / step);
        if math::abs(k * step - t_max) > 1e-9 * t_max || k < 1.0 || k > 1e7 {
            return Err(Error::invalid(format!("t_max {t_max} is not a multiple of step {step}")));
        }
        let k = k as usize;
        let mut points: Vec<f64> = (0..=k).map(|i| i as f64 * step).collect();
        points[k] = t_max;
        Ok(Self { t_max, step, points })
    }

    pub fn t_min(&self) -> f64 {
        0.0
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point equal to `t` (within 1e-9), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = math::round(t / self.step);
        if k < 0.0 || k as usize >= self.points.len() {
            return None;
        }
        let k = k as usize;
        (math::abs(self.points[k] - t) <= 1e-9).then_some(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

pub const SPLIT_FRACTIONS: [f64; 3] = [0.50, 0.25, 0.25];

/// Sizes of the train / valid / test splits for `n` contracts, rounded by
/// largest remainder (ties go to the earlier split), so each size is
/// within 1 of its 50/25/25 share.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let q = n / 4;
    match n % 4 {
        0 => [2 * q, q, q],
        1 => [2 * q + 1, q, q],
        2 => [2 * q + 1, q + 1, q],
        _ => [2 * q + 1, q + 1, q + 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub lambda: f64,
    pub n: usize,
    pub split_fractions: [f64; 3],
    pub standardization: StandardizationStats,
    pub covariate_distribution: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub contracts: Vec<Contract>,
    pub split_labels: BTreeMap<ContractId, Split>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn split_of(&self, id: ContractId) -> Option<Split> {
        self.split_labels.get(&id).copied()
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &Contract> + '_ {
        self.contracts.iter().filter(move |c| self.split_of(c.id) == Some(which))
    }

    pub fn split_vec(&self, which: Split) -> Vec<Contract> {
        self.split(which).cloned().collect()
    }

    /// Checks id uniqueness, label coverage, per-contract ranges and a
    /// common feature dimension.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        let dim = self.contracts.first().map(|c| c.features.dim());
        for c in &self.contracts {
            if seen.insert(c.id, ()).is_some() {
                return Err(Error::invalid(format!("duplicate contract id {}", c.id)));
            }
            if Some(c.features.dim()) != dim {
                return Err(Error::shape(format!("contract {} has feature dim {}", c.id, c.features.dim())));
            }
            if !self.split_labels.contains_key(&c.id) {
                return Err(Error::invalid(format!("contract {} has no split label", c.id)));
            }
            c.validate()?;
        }
        if self.split_labels.len() != self.contracts.len() {
            return Err(Error::invalid("split labels reference unknown contracts"));
        }
        Ok(())
    }
}
