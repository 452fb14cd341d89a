//! Potential-outcome estimators over a continuous PM frequency.
//!
//! - [`fit_supervised`]: a plain regression network on `(x, t) → y`. It
//!   makes no correction for selection bias.
//! - [`fit_scigan`]: a counterfactual GAN first generates outcomes at
//!   uniformly drawn dosages. An inference network is then fit on the
//!   factual data augmented with those samples.
//! - [`average_effect_estimator`]: the population-mean curve of another
//!   estimator.
//!
//! Each outcome (overhauls, failures) gets its own independently trained
//! estimator; neither ever reads the other outcome.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{Oracle, OutcomeKind};
use crate::domain::{Contract, GridSpec, PM_FREQ_MAX};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, History, Matrix, Mlp, NetworkCheckpoint, TrainConfig};
use crate::rng::{derive_seed, stream, Purpose};

mod average;
mod scigan;

pub use average::{average_effect_estimator, AverageEffect};
pub use scigan::{fit_scigan, train_gan, GanEpoch, GanModel, GanReport, SciganConfig};

/// Anything that predicts an outcome curve for a contract.
///
/// Learned estimators read only `contract.features`; the oracle adapter
/// also uses the contract id to look up its noise.
pub trait OutcomeEstimator {
    fn name(&self) -> &str;

    fn outcome(&self) -> OutcomeKind;

    /// Predictions at every PM frequency in `ts`.
    fn predict_curve(&self, contract: &Contract, ts: &[f64]) -> Vec<f64>;

    fn predict(&self, contract: &Contract, t: f64) -> f64 {
        self.predict_curve(contract, core::slice::from_ref(&t))[0]
    }

    /// Curves for a whole population; learned estimators batch this.
    fn predict_population(&self, contracts: &[&Contract], ts: &[f64]) -> Vec<Vec<f64>> {
        contracts.iter().map(|c| self.predict_curve(c, ts)).collect()
    }
}

impl<E: OutcomeEstimator + ?Sized> OutcomeEstimator for &E {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn outcome(&self) -> OutcomeKind {
        (**self).outcome()
    }

    fn predict_curve(&self, contract: &Contract, ts: &[f64]) -> Vec<f64> {
        (**self).predict_curve(contract, ts)
    }

    fn predict_population(&self, contracts: &[&Contract], ts: &[f64]) -> Vec<Vec<f64>> {
        (**self).predict_population(contracts, ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mlp,
    Scigan,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Scigan, EstimatorKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Mlp => "mlp",
            EstimatorKind::Scigan => "scigan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(EstimatorKind::Mlp),
            "scigan" => Ok(EstimatorKind::Scigan),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }

    fn tag(self) -> u64 {
        match self {
            EstimatorKind::Mlp => 1,
            EstimatorKind::Scigan => 2,
        }
    }
}

/// Learning rates and hidden widths tried during model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub hidden_widths: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self { learning_rates: alloc::vec![0.01, 0.003], hidden_widths: alloc::vec![32, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Base training settings; the grid overrides the learning rate.
    pub train: TrainConfig,
    pub hidden_layers: usize,
    pub grid: HyperGrid,
    pub scigan: SciganConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden_layers: 2,
            grid: HyperGrid::default(),
            scigan: SciganConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.hidden_layers == 0 {
            return Err(Error::invalid("need at least one hidden layer"));
        }
        if self.grid.learning_rates.is_empty() || self.grid.hidden_widths.is_empty() {
            return Err(Error::invalid("hyperparameter grid is empty"));
        }
        if self.grid.learning_rates.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite())
            || self.grid.hidden_widths.contains(&0)
        {
            return Err(Error::invalid("grid learning rates and widths must be positive"));
        }
        self.scigan.validate()
    }

    /// Same settings with every seed derived from `seed`, `kind` and
    /// `outcome`, so the four models of one experiment never share a stream.
    pub fn reseeded(&self, seed: u64, kind: EstimatorKind, outcome: OutcomeKind) -> Self {
        let tag = kind.tag() * 16 + outcome as u64;
        let mut cfg = self.clone();
        cfg.train.seed = derive_seed(seed, tag);
        cfg
    }
}

/// Network on `(x, t / t_scale)` predicting a standardized outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub net: Mlp,
    pub t_scale: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

pub(crate) fn design_matrix(rows: &[(&[f64], f64)], t_scale: f64) -> Matrix {
    let d = rows.first().map_or(0, |r| r.0.len());
    let mut data = Vec::with_capacity(rows.len() * (d + 1));
    for (x, t) in rows {
        data.extend_from_slice(x);
        data.push(t / t_scale);
    }
    Matrix::from_vec(rows.len(), d + 1, data).expect("row lengths are uniform")
}

/// Mean and population std of the targets. Predictions are mapped back
/// through the same spread, so constant targets give constant predictions.
pub(crate) fn target_stats(ys: &[f64]) -> (f64, f64) {
    let m = crate::math::mean(ys);
    let var = ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / ys.len().max(1) as f64;
    let s = crate::math::sqrt(var);
    (m, if s > 0.0 { s } else { f64::MIN_POSITIVE })
}

impl Regressor {
    pub fn predict_matrix(&self, design: &Matrix) -> Result<Vec<f64>> {
        let out = self.net.forward(design)?;
        Ok(out.data().iter().map(|v| self.y_mean + self.y_std * v).collect())
    }

    fn predict_pairs(&self, rows: &[(&[f64], f64)]) -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        self.predict_matrix(&design_matrix(rows, self.t_scale)).unwrap_or_else(|_| alloc::vec![f64::NAN; rows.len()])
    }

    /// Mean squared error on the observed outcomes of `contracts`.
    pub fn factual_mse(&self, contracts: &[Contract], kind: OutcomeKind) -> f64 {
        let rows: Vec<(&[f64], f64)> = contracts.iter().map(|c| (c.features.as_slice(), c.pm_freq)).collect();
        let pred = self.predict_pairs(&rows);
        pred.iter().zip(contracts).map(|(p, c)| (p - kind.observed(c)).powi_2()).sum::<f64>()
            / contracts.len().max(1) as f64
    }
}

trait Square {
    fn powi_2(self) -> f64;
}

impl Square for f64 {
    fn powi_2(self) -> f64 {
        self * self
    }
}

/// One model-selection trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperTrial {
    pub learning_rate: f64,
    pub hidden_width: usize,
    /// Validation MSE on observed outcomes, in outcome units.
    pub valid_mse: f64,
    pub epochs_run: usize,
}

/// Training data for a regressor: features, PM frequency, outcome.
pub(crate) struct Samples<'a> {
    pub rows: Vec<(&'a [f64], f64)>,
    pub targets: Vec<f64>,
}

impl<'a> Samples<'a> {
    pub fn factual(contracts: &'a [Contract], kind: OutcomeKind) -> Self {
        Self {
            rows: contracts.iter().map(|c| (c.features.as_slice(), c.pm_freq)).collect(),
            targets: contracts.iter().map(|c| kind.observed(c)).collect(),
        }
    }
}

/// Fits one network per grid point and keeps the one with the lowest
/// validation MSE (first wins on ties).
pub(crate) fn fit_regressor(
    train: &Samples<'_>,
    valid: &Samples<'_>,
    cfg: &EstimatorConfig,
) -> Result<(Regressor, Vec<HyperTrial>, History)> {
    if train.rows.is_empty() || valid.rows.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let t_scale = PM_FREQ_MAX;
    let (y_mean, y_std) = target_stats(&train.targets);
    let standardize = |ys: &[f64]| Matrix::from_vec(ys.len(), 1, ys.iter().map(|y| (y - y_mean) / y_std).collect());
    let tx = design_matrix(&train.rows, t_scale);
    let ty = standardize(&train.targets)?;
    let vx = design_matrix(&valid.rows, t_scale);
    let vy = standardize(&valid.targets)?;
    let d_in = tx.cols();

    let mut trials = Vec::new();
    let mut best: Option<(Regressor, History, f64)> = None;
    let mut trial_index = 0u64;
    for &hidden_width in &cfg.grid.hidden_widths {
        for &learning_rate in &cfg.grid.learning_rates {
            let seed = derive_seed(cfg.train.seed, trial_index);
            trial_index += 1;
            let mut widths = alloc::vec![d_in];
            widths.extend(core::iter::repeat(hidden_width).take(cfg.hidden_layers));
            widths.push(1);
            let net =
                Mlp::new(&widths, Activation::Relu, Activation::Identity, &mut stream(seed, Purpose::Training, 1))?;
            let tcfg = TrainConfig { learning_rate, seed, ..cfg.train.clone() };
            let (net, history) = nn::train(net, (&tx, &ty), (&vx, &vy), &tcfg)?;
            let valid_mse = history.best_valid_loss * y_std * y_std;
            trials.push(HyperTrial { learning_rate, hidden_width, valid_mse, epochs_run: history.epochs.len() });
            if best.as_ref().map_or(true, |b| valid_mse < b.2) {
                best = Some((Regressor { net, t_scale, y_mean, y_std }, history, valid_mse));
            }
        }
    }
    let (reg, history, _) = best.expect("grid is non-empty");
    Ok((reg, trials, history))
}

/// A trained estimator for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub kind: EstimatorKind,
    pub outcome: OutcomeKind,
    pub regressor: Regressor,
    pub trials: Vec<HyperTrial>,
    /// Training history of the selected trial.
    pub history: History,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gan: Option<GanReport>,
    #[serde(skip)]
    name: String,
}

impl FittedEstimator {
    pub(crate) fn new(
        kind: EstimatorKind,
        outcome: OutcomeKind,
        regressor: Regressor,
        trials: Vec<HyperTrial>,
        history: History,
        gan: Option<GanReport>,
    ) -> Self {
        let mut e = Self { kind, outcome, regressor, trials, history, gan, name: String::new() };
        e.refresh_name();
        e
    }

    /// Restores the display name after deserialization.
    pub fn refresh_name(&mut self) {
        self.name = format!("{}/{}", self.kind.as_str(), self.outcome.as_str());
    }

    pub fn factual_mse(&self, contracts: &[Contract]) -> f64 {
        self.regressor.factual_mse(contracts, self.outcome)
    }
}

pub const ESTIMATOR_CHECKPOINT_VERSION: u32 = 1;

/// Persisted form of a [`FittedEstimator`]: the network plus what it was
/// trained for and with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCheckpoint {
    pub version: u32,
    pub kind: EstimatorKind,
    pub outcome: OutcomeKind,
    pub grid: GridSpec,
    pub config: EstimatorConfig,
    pub t_scale: f64,
    pub y_mean: f64,
    pub y_std: f64,
    pub network: NetworkCheckpoint,
    pub trials: Vec<HyperTrial>,
    pub history: History,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gan: Option<GanReport>,
}

impl FittedEstimator {
    pub fn to_checkpoint(&self, grid: GridSpec, config: &EstimatorConfig) -> EstimatorCheckpoint {
        EstimatorCheckpoint {
            version: ESTIMATOR_CHECKPOINT_VERSION,
            kind: self.kind,
            outcome: self.outcome,
            grid,
            config: config.clone(),
            t_scale: self.regressor.t_scale,
            y_mean: self.regressor.y_mean,
            y_std: self.regressor.y_std,
            network: NetworkCheckpoint::from_mlp(&self.regressor.net),
            trials: self.trials.clone(),
            history: self.history.clone(),
            gan: self.gan.clone(),
        }
    }

    pub fn from_checkpoint(ck: &EstimatorCheckpoint) -> Result<Self> {
        if ck.version != ESTIMATOR_CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported estimator checkpoint version {}", ck.version)));
        }
        let net = ck.network.to_mlp()?;
        if net.output_dim() != 1 {
            return Err(Error::shape(format!("estimator network has {} outputs", net.output_dim())));
        }
        if !(ck.t_scale > 0.0 && ck.y_std > 0.0 && ck.y_mean.is_finite()) {
            return Err(Error::invalid("checkpoint has invalid output scaling"));
        }
        let regressor = Regressor { net, t_scale: ck.t_scale, y_mean: ck.y_mean, y_std: ck.y_std };
        Ok(Self::new(ck.kind, ck.outcome, regressor, ck.trials.clone(), ck.history.clone(), ck.gan.clone()))
    }
}

/// Rows are chunked so a population × grid prediction never materializes
/// one huge design matrix.
const PREDICT_CHUNK_ROWS: usize = 16_384;

impl OutcomeEstimator for FittedEstimator {
    fn name(&self) -> &str {
        if self.name.is_empty() {
            self.kind.as_str()
        } else {
            &self.name
        }
    }

    fn outcome(&self) -> OutcomeKind {
        self.outcome
    }

    fn predict_curve(&self, contract: &Contract, ts: &[f64]) -> Vec<f64> {
        let rows: Vec<(&[f64], f64)> = ts.iter().map(|&t| (contract.features.as_slice(), t)).collect();
        self.regressor.predict_pairs(&rows)
    }

    fn predict_population(&self, contracts: &[&Contract], ts: &[f64]) -> Vec<Vec<f64>> {
        let rows: Vec<(&[f64], f64)> =
            contracts.iter().flat_map(|c| ts.iter().map(move |&t| (c.features.as_slice(), t))).collect();
        let mut flat = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(PREDICT_CHUNK_ROWS) {
            flat.extend(self.regressor.predict_pairs(chunk));
        }
        if ts.is_empty() {
            return contracts.iter().map(|_| Vec::new()).collect();
        }
        flat.chunks(ts.len()).map(<[f64]>::to_vec).collect()
    }
}

fn check_splits(train: &[Contract], valid: &[Contract]) -> Result<()> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    Ok(())
}

/// Supervised baseline: regress observed outcomes on `(x, t)` by MSE.
pub fn fit_supervised(
    train: &[Contract],
    valid: &[Contract],
    kind: OutcomeKind,
    cfg: &EstimatorConfig,
) -> Result<FittedEstimator> {
    check_splits(train, valid)?;
    cfg.validate()?;
    let (reg, trials, history) = fit_regressor(&Samples::factual(train, kind), &Samples::factual(valid, kind), cfg)?;
    Ok(FittedEstimator::new(EstimatorKind::Mlp, kind, reg, trials, history, None))
}

/// The data generator's true curves, exposed as an estimator.
#[derive(Debug, Clone, Copy)]
pub struct OracleEstimator<'a> {
    oracle: &'a Oracle,
    kind: OutcomeKind,
}

impl<'a> OracleEstimator<'a> {
    pub fn new(oracle: &'a Oracle, kind: OutcomeKind) -> Self {
        Self { oracle, kind }
    }
}

impl OutcomeEstimator for OracleEstimator<'_> {
    fn name(&self) -> &str {
        match self.kind {
            OutcomeKind::Overhauls => "oracle/overhauls",
            OutcomeKind::Failures => "oracle/failures",
        }
    }

    fn outcome(&self) -> OutcomeKind {
        self.kind
    }

    fn predict_curve(&self, contract: &Contract, ts: &[f64]) -> Vec<f64> {
        self.oracle.curve(self.kind, contract, ts).unwrap_or_else(|_| alloc::vec![f64::NAN; ts.len()])
    }
}
