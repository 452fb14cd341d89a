//! Outcome and policy metrics against the oracle, and the multi-seed
//! experiment runner.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{diagnostics, generate_dataset, Oracle, OutcomeKind};
use crate::domain::{Contract, CostParams, Dataset, GridSpec, Split, TreatmentGrid, PM_FREQ_MAX};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_scigan, fit_supervised, EstimatorConfig, EstimatorKind, FittedEstimator, OutcomeEstimator,
};
use crate::math::{mean, median, sample_std};
use crate::policy::{prescribe, prescribe_oracle, true_cost_curve, PolicyName, Prescription};

pub const REPORT_VERSION: u32 = 1;

/// Trapezoidal integral of equally spaced samples.
pub fn trapezoid(ys: &[f64], step: f64) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    let inner: f64 = ys[1..ys.len() - 1].iter().sum();
    step * (0.5 * (ys[0] + ys[ys.len() - 1]) + inner)
}

/// Mean over contracts of `∫ (y(t) − ŷ(t))² dt`, integrated on the grid.
pub fn mise_from_curves(predicted: &[Vec<f64>], truth: &[Vec<f64>], grid: &TreatmentGrid) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!("{} predicted curves vs {} true curves", predicted.len(), truth.len())));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut total = 0.0;
    for (p, y) in predicted.iter().zip(truth) {
        if p.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "curves of length {} / {} on a {}-point grid",
                p.len(),
                y.len(),
                grid.len()
            )));
        }
        let sq: Vec<f64> = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect();
        total += trapezoid(&sq, grid.step());
    }
    Ok(total / predicted.len() as f64)
}

/// MISE of `est` over `population` against the oracle's true curves.
pub fn mise(
    est: &dyn OutcomeEstimator,
    oracle: &Oracle,
    population: &[&Contract],
    grid: &TreatmentGrid,
) -> Result<f64> {
    if grid != &oracle.grid {
        return Err(Error::GridMismatch(format!(
            "evaluation grid [0, {}] step {} differs from the oracle's [0, {}] step {}",
            grid.t_max(),
            grid.step(),
            oracle.grid.t_max(),
            oracle.grid.step()
        )));
    }
    let truth =
        population.iter().map(|c| oracle.test_curve(est.outcome(), c, grid.points())).collect::<Result<Vec<_>>>()?;
    let predicted = est.predict_population(population, grid.points());
    mise_from_curves(&predicted, &truth, grid)
}

fn aligned<'a>(
    a: &'a [Prescription],
    b: &'a [Prescription],
) -> Result<impl Iterator<Item = (&'a Prescription, &'a Prescription)>> {
    if a.len() != b.len() {
        return Err(Error::IdMismatch(format!("{} prescriptions vs {} ideal ones", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x.id != y.id) {
        return Err(Error::IdMismatch(format!("contract {} paired with {}", x.id, y.id)));
    }
    Ok(a.iter().zip(b))
}

/// Mean squared distance between prescribed and ideal PM frequencies.
pub fn policy_error(prescribed: &[Prescription], ideal: &[Prescription]) -> Result<f64> {
    let n = prescribed.len() as f64;
    Ok(aligned(prescribed, ideal)?
        .map(|(p, o)| {
            let d = o.prescribed_t - p.prescribed_t;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Mean of `achieved[i] / ideal[i]`.
pub fn cost_ratio(achieved: &[f64], ideal: &[f64]) -> Result<f64> {
    if achieved.len() != ideal.len() {
        return Err(Error::shape(format!("{} costs vs {} ideal costs", achieved.len(), ideal.len())));
    }
    if achieved.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut total = 0.0;
    for (a, i) in achieved.iter().zip(ideal) {
        if !(*i > 0.0) {
            return Err(Error::invalid(format!("ideal cost {i} is not positive")));
        }
        total += a / i;
    }
    Ok(total / achieved.len() as f64)
}

/// Fills `true_cost` of each prescription from the oracle's true cost curve.
pub fn attach_true_costs(
    prescriptions: &mut [Prescription],
    oracle: &Oracle,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<()> {
    if prescriptions.len() != population.len() {
        return Err(Error::IdMismatch(format!(
            "{} prescriptions for {} contracts",
            prescriptions.len(),
            population.len()
        )));
    }
    for (p, c) in prescriptions.iter_mut().zip(population) {
        if p.id != c.id {
            return Err(Error::IdMismatch(format!("prescription for {} paired with contract {}", p.id, c.id)));
        }
        let curve = true_cost_curve(oracle, c, cp, grid)?;
        let k = grid
            .index_of(p.prescribed_t)
            .ok_or_else(|| Error::GridMismatch(format!("t = {} is off the grid", p.prescribed_t)))?;
        p.true_cost = Some(curve.costs()[k]);
    }
    Ok(())
}

/// Mean over contracts of true cost at the prescription over true cost at
/// the ideal prescription.
pub fn policy_cost_ratio(
    prescribed: &[Prescription],
    oracle: &Oracle,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<f64> {
    let mut achieved = prescribed.to_vec();
    attach_true_costs(&mut achieved, oracle, population, cp, grid)?;
    let ideal = prescribe_oracle(oracle, population, cp, grid)?;
    let a: Vec<f64> = achieved.iter().map(|p| p.true_cost.unwrap_or(f64::NAN)).collect();
    let i: Vec<f64> = aligned(&achieved, &ideal)?.map(|(_, o)| o.estimated_cost).collect();
    cost_ratio(&a, &i)
}

/// A named set of unit costs under which policies are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSetting {
    pub name: String,
    pub costs: CostParams,
}

impl Default for CostSetting {
    fn default() -> Self {
        Self { name: "default".into(), costs: CostParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    /// Policies are evaluated once per setting, on the same fitted models.
    pub cost_settings: Vec<CostSetting>,
    pub estimator: EstimatorConfig,
    pub policies: Vec<PolicyName>,
    /// Keep every prescription in the cell results.
    #[serde(default)]
    pub diagnostics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            lambdas: alloc::vec![0.0, 10.0, 20.0, 30.0],
            seeds: alloc::vec![1, 2, 3, 4, 5],
            grid: GridSpec::default(),
            cost_settings: alloc::vec![CostSetting::default()],
            estimator: EstimatorConfig::default(),
            policies: PolicyName::ALL.to_vec(),
            diagnostics: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid(format!("n must be at least 8, got {}", self.n)));
        }
        if self.lambdas.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("need at least one lambda and one seed"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("lambda must be finite and non-negative, got {l}")));
        }
        if self.cost_settings.is_empty() {
            return Err(Error::invalid("need at least one cost setting"));
        }
        for s in &self.cost_settings {
            s.costs.validate()?;
        }
        let names: alloc::collections::BTreeSet<&str> = self.cost_settings.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.cost_settings.len() {
            return Err(Error::invalid("cost setting names must be unique"));
        }
        let grid = self.treatment_grid()?;
        if grid.t_max() != PM_FREQ_MAX {
            return Err(Error::invalid(format!("grid must span [0, {PM_FREQ_MAX}], got t_max {}", grid.t_max())));
        }
        self.estimator.validate()
    }

    pub fn treatment_grid(&self) -> Result<TreatmentGrid> {
        TreatmentGrid::try_from(self.grid)
    }
}

/// The four fitted models of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEstimators {
    pub mlp_overhauls: FittedEstimator,
    pub mlp_failures: FittedEstimator,
    pub scigan_overhauls: FittedEstimator,
    pub scigan_failures: FittedEstimator,
}

impl CellEstimators {
    pub fn get(&self, kind: EstimatorKind, outcome: OutcomeKind) -> &FittedEstimator {
        match (kind, outcome) {
            (EstimatorKind::Mlp, OutcomeKind::Overhauls) => &self.mlp_overhauls,
            (EstimatorKind::Mlp, OutcomeKind::Failures) => &self.mlp_failures,
            (EstimatorKind::Scigan, OutcomeKind::Overhauls) => &self.scigan_overhauls,
            (EstimatorKind::Scigan, OutcomeKind::Failures) => &self.scigan_failures,
        }
    }
}

/// Fits one estimator with seeds derived from `seed`.
pub fn fit_estimator(
    ds: &Dataset,
    kind: EstimatorKind,
    outcome: OutcomeKind,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<FittedEstimator> {
    let train = ds.split_vec(Split::Train);
    let valid = ds.split_vec(Split::Valid);
    let cfg = cfg.reseeded(seed, kind, outcome);
    match kind {
        EstimatorKind::Mlp => fit_supervised(&train, &valid, outcome, &cfg),
        EstimatorKind::Scigan => fit_scigan(&train, &valid, outcome, &cfg),
    }
}

pub fn fit_cell_estimators(ds: &Dataset, cfg: &EstimatorConfig, seed: u64) -> Result<CellEstimators> {
    Ok(CellEstimators {
        mlp_overhauls: fit_estimator(ds, EstimatorKind::Mlp, OutcomeKind::Overhauls, cfg, seed)?,
        mlp_failures: fit_estimator(ds, EstimatorKind::Mlp, OutcomeKind::Failures, cfg, seed)?,
        scigan_overhauls: fit_estimator(ds, EstimatorKind::Scigan, OutcomeKind::Overhauls, cfg, seed)?,
        scigan_failures: fit_estimator(ds, EstimatorKind::Scigan, OutcomeKind::Failures, cfg, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseRecord {
    pub estimator: EstimatorKind,
    pub outcome: OutcomeKind,
    pub mise: f64,
    /// MSE on the observed test outcomes.
    pub factual_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub cost_setting: String,
    pub policy: PolicyName,
    pub pe: f64,
    pub pcr: f64,
    pub mean_prescribed_t: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prescriptions: Vec<Prescription>,
}

/// How strongly treatment depends on the covariates in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDiagnostics {
    /// KS statistic of all observed PM frequencies against uniform `[0, 20]`.
    pub treatment_ks: f64,
    /// W1 distance between the PM frequencies of the top and bottom
    /// quartiles of the bias score.
    pub delta_quartile_w1: f64,
}

pub fn bias_diagnostics(ds: &Dataset, oracle: &Oracle) -> BiasDiagnostics {
    let ts: Vec<f64> = ds.contracts.iter().map(|c| c.pm_freq).collect();
    let mut scored: Vec<(f64, f64)> =
        ds.contracts.iter().map(|c| (oracle.bias.delta(&c.features), c.pm_freq)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q = scored.len() / 4;
    let low: Vec<f64> = scored[..q].iter().map(|p| p.1).collect();
    let high: Vec<f64> = scored[scored.len() - q..].iter().map(|p| p.1).collect();
    BiasDiagnostics {
        treatment_ks: diagnostics::ks_statistic_uniform(&ts, 0.0, PM_FREQ_MAX),
        delta_quartile_w1: diagnostics::wasserstein_1(&low, &high),
    }
}

/// Everything measured in one (seed, λ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub bias: BiasDiagnostics,
    pub mise: Vec<MiseRecord>,
    pub policies: Vec<PolicyRecord>,
}

/// Metrics of already fitted estimators on the test split.
pub fn evaluate_cell(
    ds: &Dataset,
    oracle: &Oracle,
    est: &CellEstimators,
    cfg: &ExperimentConfig,
) -> Result<CellMetrics> {
    let grid = cfg.treatment_grid()?;
    let test: Vec<&Contract> = ds.split(Split::Test).collect();
    let test_owned: Vec<Contract> = test.iter().map(|c| (*c).clone()).collect();
    let mut mise_records = Vec::new();
    for kind in EstimatorKind::ALL {
        for outcome in OutcomeKind::ALL {
            let e = est.get(kind, outcome);
            mise_records.push(MiseRecord {
                estimator: kind,
                outcome,
                mise: mise(e, oracle, &test, &grid)?,
                factual_mse: e.factual_mse(&test_owned),
            });
        }
    }
    let mut policies = Vec::new();
    for setting in &cfg.cost_settings {
        let cp = &setting.costs;
        let ideal = prescribe_oracle(oracle, &test, cp, &grid)?;
        for &policy in &cfg.policies {
            let mut ps = match policy.estimator() {
                Some(kind) => {
                    let models: (&dyn OutcomeEstimator, &dyn OutcomeEstimator) =
                        (est.get(kind, OutcomeKind::Overhauls), est.get(kind, OutcomeKind::Failures));
                    prescribe(policy, Some(models), oracle, &test, cp, &grid)?
                }
                None => ideal.clone(),
            };
            attach_true_costs(&mut ps, oracle, &test, cp, &grid)?;
            let achieved: Vec<f64> = ps.iter().map(|p| p.true_cost.unwrap_or(f64::NAN)).collect();
            let best: Vec<f64> = ideal.iter().map(|p| p.estimated_cost).collect();
            policies.push(PolicyRecord {
                cost_setting: setting.name.clone(),
                policy,
                pe: policy_error(&ps, &ideal)?,
                pcr: cost_ratio(&achieved, &best)?,
                mean_prescribed_t: mean(&ps.iter().map(|p| p.prescribed_t).collect::<Vec<_>>()),
                prescriptions: if cfg.diagnostics { ps } else { Vec::new() },
            });
        }
    }
    Ok(CellMetrics { bias: bias_diagnostics(ds, oracle), mise: mise_records, policies })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Complete(CellMetrics),
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub lambda: f64,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        match &self.outcome {
            CellOutcome::Complete(m) => Some(m),
            CellOutcome::Failed { .. } => None,
        }
    }

    fn failed(seed: u64, lambda: f64, stage: &str, e: Error) -> Self {
        Self { seed, lambda, outcome: CellOutcome::Failed { stage: stage.into(), error: e.to_string() } }
    }
}

/// Generates, fits and evaluates one cell. Failures are recorded, not
/// returned.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64, lambda: f64) -> CellResult {
    let grid = match cfg.treatment_grid() {
        Ok(g) => g,
        Err(e) => return CellResult::failed(seed, lambda, "config", e),
    };
    let (ds, oracle) = match generate_dataset(cfg.n, lambda, seed, &grid) {
        Ok(v) => v,
        Err(e) => return CellResult::failed(seed, lambda, "generate", e),
    };
    let est = match fit_cell_estimators(&ds, &cfg.estimator, seed) {
        Ok(v) => v,
        Err(e) => return CellResult::failed(seed, lambda, "train", e),
    };
    match evaluate_cell(&ds, &oracle, &est, cfg) {
        Ok(m) => CellResult { seed, lambda, outcome: CellOutcome::Complete(m) },
        Err(e) => CellResult::failed(seed, lambda, "evaluate", e),
    }
}

/// Mean, sample std and median over seeds, with the per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        Self { mean: mean(&values), std: sample_std(&values), median: median(&values), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseSummary {
    pub lambda: f64,
    pub estimator: EstimatorKind,
    pub outcome: OutcomeKind,
    pub mise: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub lambda: f64,
    pub cost_setting: String,
    pub policy: PolicyName,
    pub pe: Summary,
    pub pcr: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub grid: GridSpec,
    /// Upper limit of the MISE integral.
    pub integration_limit: f64,
    pub cost_settings: Vec<CostSetting>,
    pub cells: Vec<CellResult>,
    /// (seed, λ) cells that did not complete.
    pub incomplete: Vec<(u64, f64)>,
    pub mise: Vec<MiseSummary>,
    pub policies: Vec<PolicySummary>,
}

/// Orders cells by (λ, seed) and summarizes completed ones per λ.
pub fn aggregate(cfg: &ExperimentConfig, mut cells: Vec<CellResult>) -> EvalReport {
    cells.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.seed.cmp(&b.seed)));
    let mut lambdas: Vec<f64> = cfg.lambdas.clone();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    lambdas.dedup();
    let incomplete = cells.iter().filter(|c| c.metrics().is_none()).map(|c| (c.seed, c.lambda)).collect();
    let mut mise_out = Vec::new();
    let mut policy_out = Vec::new();
    for &lambda in &lambdas {
        let done: Vec<&CellMetrics> =
            cells.iter().filter(|c| c.lambda == lambda).filter_map(CellResult::metrics).collect();
        if done.is_empty() {
            continue;
        }
        for estimator in EstimatorKind::ALL {
            for outcome in OutcomeKind::ALL {
                let values = done
                    .iter()
                    .filter_map(|m| m.mise.iter().find(|r| r.estimator == estimator && r.outcome == outcome))
                    .map(|r| r.mise)
                    .collect();
                mise_out.push(MiseSummary { lambda, estimator, outcome, mise: Summary::of(values) });
            }
        }
        for setting in &cfg.cost_settings {
            for &policy in &cfg.policies {
                let recs: Vec<&PolicyRecord> = done
                    .iter()
                    .filter_map(|m| m.policies.iter().find(|r| r.policy == policy && r.cost_setting == setting.name))
                    .collect();
                policy_out.push(PolicySummary {
                    lambda,
                    cost_setting: setting.name.clone(),
                    policy,
                    pe: Summary::of(recs.iter().map(|r| r.pe).collect()),
                    pcr: Summary::of(recs.iter().map(|r| r.pcr).collect()),
                });
            }
        }
    }
    EvalReport {
        version: REPORT_VERSION,
        n: cfg.n,
        seeds: cfg.seeds.clone(),
        lambdas,
        grid: cfg.grid,
        integration_limit: PM_FREQ_MAX,
        cost_settings: cfg.cost_settings.clone(),
        cells,
        incomplete,
        mise: mise_out,
        policies: policy_out,
    }
}

/// Runs every (seed, λ) cell in order and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &lambda in &cfg.lambdas {
        for &seed in &cfg.seeds {
            cells.push(run_cell(cfg, seed, lambda));
        }
    }
    Ok(aggregate(cfg, cells))
}

/// Which summary a trend table reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mise,
    Pe,
    Pcr,
}

/// One row of a metric-versus-λ table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub lambda: f64,
    pub policy_or_model: String,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if self.version != REPORT_VERSION {
            return Err(Error::invalid(format!("report version {} (expected {REPORT_VERSION})", self.version)));
        }
        let bad = |what: &str, v: f64| Err(Error::invalid(format!("{what} = {v} violates its bound")));
        for c in &self.cells {
            if let Some(m) = c.metrics() {
                for r in &m.mise {
                    if !(r.mise >= 0.0) {
                        return bad("MISE", r.mise);
                    }
                }
                for r in &m.policies {
                    if !(r.pe >= 0.0) {
                        return bad("PE", r.pe);
                    }
                    if !(r.pcr >= 1.0 - 1e-12) {
                        return bad("PCR", r.pcr);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn policy(&self, lambda: f64, cost_setting: &str, policy: PolicyName) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.lambda == lambda && p.cost_setting == cost_setting && p.policy == policy)
    }

    pub fn mise_of(&self, lambda: f64, estimator: EstimatorKind, outcome: OutcomeKind) -> Option<&MiseSummary> {
        self.mise.iter().find(|m| m.lambda == lambda && m.estimator == estimator && m.outcome == outcome)
    }

    /// Rows for the metric-versus-λ tables. Policy metrics use the first
    /// cost setting.
    pub fn trend(&self, metric: Metric) -> Vec<TrendRow> {
        match metric {
            Metric::Mise => self
                .mise
                .iter()
                .map(|m| TrendRow {
                    lambda: m.lambda,
                    policy_or_model: format!("{}/{}", m.estimator.as_str(), m.outcome.as_str()),
                    mean: m.mise.mean,
                    std: m.mise.std,
                })
                .collect(),
            Metric::Pe | Metric::Pcr => {
                let primary = self.cost_settings.first().map(|s| s.name.as_str()).unwrap_or_default();
                self.policies
                    .iter()
                    .filter(|p| p.cost_setting == primary)
                    .map(|p| {
                        let s = if metric == Metric::Pe { &p.pe } else { &p.pcr };
                        TrendRow {
                            lambda: p.lambda,
                            policy_or_model: p.policy.as_str().into(),
                            mean: s.mean,
                            std: s.std,
                        }
                    })
                    .collect()
            }
        }
    }
}
