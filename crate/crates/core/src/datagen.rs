//! Semi-synthetic contract populations.
//!
//! Covariates are drawn independently and uniformly over the reference
//! ranges. Potential outcomes follow
//!
//! ```text
//! o(t) = 7 σ(v_oᵀx − σ(w_oᵀx)·t/10 + ε_o)
//! f(t) = 9 σ(v_fᵀx − σ(w_fᵀx)·t/10 + ε_f)
//! ```
//!
//! with weights uniform on (0,1) per experiment seed and one standard-normal
//! noise draw per contract and outcome. Historical PM frequencies are
//! assigned as `t = 20·Beta(1 + λδ/10, 1 + λδ)` with `δ = σ(w_bᵀx)`, so `λ`
//! dials the strength of selection bias and `λ = 0` is a randomized
//! assignment.
//!
//! The [`Oracle`] keeps the weights and per-contract noise, and can evaluate
//! any contract's true curve at any PM frequency.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    encode_features, split_sizes, Contract, ContractId, Covariates, Dataset, DatasetMeta, FeatureVector, Split,
    StandardizationStats, TreatmentGrid, AGE_RANGE, AVG_HOURS_PER_YEAR_RANGE, CONTRACT_TYPES, DURATION_DAYS_RANGE,
    FEATURE_DIM, HOURS_AT_START_RANGE, HOURS_DURING_RANGE, MACHINE_TYPES, PM_FREQ_MAX, SPLIT_FRACTIONS,
};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};
use crate::rng::{stream, Purpose};

pub const OVERHAUL_SCALE: f64 = 7.0;
pub const FAILURE_SCALE: f64 = 9.0;
/// Maximal reduction of the logit per PM event.
pub const PM_EFFECT_SLOPE: f64 = 0.1;

pub const COVARIATE_DISTRIBUTION: &str = "independent uniform over reference ranges";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Overhauls,
    Failures,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 2] = [OutcomeKind::Overhauls, OutcomeKind::Failures];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Overhauls => "overhauls",
            OutcomeKind::Failures => "failures",
        }
    }

    /// Observed value of this outcome on a contract.
    pub fn observed(self, c: &Contract) -> f64 {
        match self {
            OutcomeKind::Overhauls => c.overhauls,
            OutcomeKind::Failures => c.failures,
        }
    }
}

/// Hidden ground-truth weights of the dose-response functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueOutcomeModel {
    pub v_o: Vec<f64>,
    pub w_o: Vec<f64>,
    pub v_f: Vec<f64>,
    pub w_f: Vec<f64>,
}

fn open_unit_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(Open01)).collect()
}

impl TrueOutcomeModel {
    pub fn sample(seed: u64, d: usize) -> Self {
        let mut rng = stream(seed, Purpose::OutcomeWeights, 0);
        let v_o = open_unit_vec(&mut rng, d);
        let w_o = open_unit_vec(&mut rng, d);
        let v_f = open_unit_vec(&mut rng, d);
        let w_f = open_unit_vec(&mut rng, d);
        Self { v_o, w_o, v_f, w_f }
    }

    pub fn dim(&self) -> usize {
        self.v_o.len()
    }

    pub fn outcome(&self, kind: OutcomeKind, x: &FeatureVector, eps: f64, t: f64) -> f64 {
        match kind {
            OutcomeKind::Overhauls => true_overhauls(self, x, eps, t),
            OutcomeKind::Failures => true_failures(self, x, eps, t),
        }
    }
}

fn dose_response(scale: f64, base: &[f64], effect: &[f64], x: &[f64], eps: f64, t: f64) -> f64 {
    scale * sigmoid(dot(base, x) - PM_EFFECT_SLOPE * sigmoid(dot(effect, x)) * t + eps)
}

/// True overhauls per running period at PM frequency `t`.
pub fn true_overhauls(m: &TrueOutcomeModel, x: &FeatureVector, eps: f64, t: f64) -> f64 {
    dose_response(OVERHAUL_SCALE, &m.v_o, &m.w_o, x.as_slice(), eps, t)
}

/// True failures per running period at PM frequency `t`.
pub fn true_failures(m: &TrueOutcomeModel, x: &FeatureVector, eps: f64, t: f64) -> f64 {
    dose_response(FAILURE_SCALE, &m.v_f, &m.w_f, x.as_slice(), eps, t)
}

/// Selection-bias injector for the historical PM assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub w_b: Vec<f64>,
    pub lambda: f64,
}

impl BiasModel {
    pub fn sample(seed: u64, d: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mut rng = stream(seed, Purpose::BiasWeights, 0);
        Ok(Self { w_b: open_unit_vec(&mut rng, d), lambda })
    }

    pub fn delta(&self, x: &FeatureVector) -> f64 {
        sigmoid(dot(&self.w_b, x.as_slice()))
    }

    /// Beta shape parameters `(1 + λδ/10, 1 + λδ)` for a given `δ`.
    pub fn beta_params(&self, delta: f64) -> (f64, f64) {
        let ld = self.lambda * delta;
        (1.0 + ld / 10.0, 1.0 + ld)
    }

    /// Expected assigned PM frequency for a given `δ`.
    pub fn treatment_mean(&self, delta: f64) -> f64 {
        let (a, b) = self.beta_params(delta);
        PM_FREQ_MAX * a / (a + b)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("bias level must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Draws `20·Beta(1 + λδ/10, 1 + λδ)`; the draw depends only on
/// `(seed, id)` and the contract's features.
pub fn assign_treatment(b: &BiasModel, x: &FeatureVector, seed: u64, id: ContractId) -> Result<f64> {
    check_lambda(b.lambda)?;
    let (alpha, beta) = b.beta_params(b.delta(x));
    let dist = Beta::new(alpha, beta).map_err(|e| Error::invalid(format!("beta({alpha}, {beta}): {e}")))?;
    let mut rng = stream(seed, Purpose::Treatment, id.0);
    let u: f64 = dist.sample(&mut rng);
    Ok((PM_FREQ_MAX * u).clamp(0.0, PM_FREQ_MAX))
}

fn sample_one(seed: u64, index: u64) -> Covariates {
    let mut rng = stream(seed, Purpose::Covariates, index);
    let mut uniform = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    let age_at_start = uniform(AGE_RANGE);
    let hours_at_start = uniform(HOURS_AT_START_RANGE);
    let hours_during = uniform(HOURS_DURING_RANGE);
    let avg_hours_per_year = uniform(AVG_HOURS_PER_YEAR_RANGE);
    let duration_days = uniform(DURATION_DAYS_RANGE);
    let machine_type = rng.random_range(1..=MACHINE_TYPES);
    let contract_type = rng.random_range(1..=CONTRACT_TYPES);
    Covariates {
        machine_type,
        age_at_start,
        hours_at_start,
        hours_during,
        avg_hours_per_year,
        contract_type,
        duration_days,
    }
}

/// `n` covariate rows; row `i` depends only on `(seed, i)`.
pub fn sample_covariates(n: usize, seed: u64) -> Vec<Covariates> {
    (0..n as u64).map(|i| sample_one(seed, i)).collect()
}

/// Per-contract noise, fixed across all PM frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractNoise {
    pub eps_o: f64,
    pub eps_f: f64,
}

impl ContractNoise {
    pub fn sample(seed: u64, id: ContractId) -> Self {
        let mut rng = stream(seed, Purpose::OutcomeNoise, id.0);
        let eps_o = rng.sample(StandardNormal);
        let eps_f = rng.sample(StandardNormal);
        Self { eps_o, eps_f }
    }

    pub fn get(&self, kind: OutcomeKind) -> f64 {
        match kind {
            OutcomeKind::Overhauls => self.eps_o,
            OutcomeKind::Failures => self.eps_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub split: Split,
    pub noise: ContractNoise,
}

/// Ground truth retained by the generator. Used only for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub seed: u64,
    pub model: TrueOutcomeModel,
    pub bias: BiasModel,
    pub grid: TreatmentGrid,
    pub records: BTreeMap<ContractId, OracleRecord>,
}

impl Oracle {
    fn record(&self, id: ContractId) -> Result<&OracleRecord> {
        self.records.get(&id).ok_or_else(|| Error::IdMismatch(format!("contract {id} unknown to the oracle")))
    }

    pub fn split_of(&self, id: ContractId) -> Option<Split> {
        self.records.get(&id).map(|r| r.split)
    }

    /// True outcome of `c` at PM frequency `t`.
    pub fn outcome(&self, kind: OutcomeKind, c: &Contract, t: f64) -> Result<f64> {
        let rec = self.record(c.id)?;
        Ok(self.model.outcome(kind, &c.features, rec.noise.get(kind), t))
    }

    /// True curve of `c` at every point in `ts`.
    pub fn curve(&self, kind: OutcomeKind, c: &Contract, ts: &[f64]) -> Result<Vec<f64>> {
        let eps = self.record(c.id)?.noise.get(kind);
        Ok(ts.iter().map(|&t| self.model.outcome(kind, &c.features, eps, t)).collect())
    }

    /// Like [`Oracle::curve`] but only for held-out test contracts.
    pub fn test_curve(&self, kind: OutcomeKind, c: &Contract, ts: &[f64]) -> Result<Vec<f64>> {
        match self.split_of(c.id) {
            Some(Split::Test) => self.curve(kind, c, ts),
            Some(_) => Err(Error::NotTestContract(c.id)),
            None => Err(Error::IdMismatch(format!("contract {} unknown to the oracle", c.id))),
        }
    }
}

/// Assigns train / valid / test labels to ids `0..n` by a seeded shuffle.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::Split, 0));
    let [n_train, n_valid, _] = split_sizes(n);
    let mut labels = alloc::vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    labels
}

/// Builds a complete semi-synthetic dataset and its oracle.
///
/// Standardization statistics come from the training split only. The bias
/// weights and `δ` act on the standardized features.
pub fn generate_dataset(n: usize, lambda: f64, seed: u64, grid: &TreatmentGrid) -> Result<(Dataset, Oracle)> {
    if n < 8 {
        return Err(Error::invalid(format!("need at least 8 contracts, got {n}")));
    }
    check_lambda(lambda)?;
    let covariates = sample_covariates(n, seed);
    let labels = assign_splits(n, seed);
    let stats =
        StandardizationStats::fit(covariates.iter().zip(&labels).filter(|(_, s)| **s == Split::Train).map(|(c, _)| c))?;

    let model = TrueOutcomeModel::sample(seed, FEATURE_DIM);
    let bias = BiasModel::sample(seed, FEATURE_DIM, lambda)?;

    let mut contracts = Vec::with_capacity(n);
    let mut split_labels = BTreeMap::new();
    let mut records = BTreeMap::new();
    for (i, (cov, split)) in covariates.into_iter().zip(labels).enumerate() {
        let id = ContractId(i as u64);
        let features = encode_features(&cov, &stats)?;
        let noise = ContractNoise::sample(seed, id);
        let pm_freq = assign_treatment(&bias, &features, seed, id)?;
        let overhauls = true_overhauls(&model, &features, noise.eps_o, pm_freq);
        let failures = true_failures(&model, &features, noise.eps_f, pm_freq);
        contracts.push(Contract { id, covariates: cov, features, pm_freq, overhauls, failures });
        split_labels.insert(id, split);
        records.insert(id, OracleRecord { split, noise });
    }

    let dataset = Dataset {
        contracts,
        split_labels,
        meta: DatasetMeta {
            seed,
            lambda,
            n,
            split_fractions: SPLIT_FRACTIONS,
            standardization: stats,
            covariate_distribution: String::from(COVARIATE_DISTRIBUTION),
        },
    };
    let oracle = Oracle { seed, model, bias, grid: grid.clone(), records };
    Ok((dataset, oracle))
}

/// Distribution diagnostics used to check the bias injector.
pub mod diagnostics {
    use alloc::vec::Vec;

    use crate::math::abs;

    /// Kolmogorov–Smirnov statistic of `samples` against uniform `[lo, hi]`.
    pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
        let mut v: Vec<f64> = samples.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len() as f64;
        let mut d: f64 = 0.0;
        for (i, x) in v.iter().enumerate() {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            d = d.max(abs((i + 1) as f64 / n - cdf)).max(abs(cdf - i as f64 / n));
        }
        d
    }

    /// First Wasserstein distance between two empirical distributions,
    /// `∫ |F_a(x) − F_b(x)| dx`.
    pub fn wasserstein_1(a: &[f64], b: &[f64]) -> f64 {
        if a.is_empty() || b.is_empty() {
            return f64::NAN;
        }
        let mut a: Vec<f64> = a.to_vec();
        let mut b: Vec<f64> = b.to_vec();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
        all.sort_by(|x, y| x.total_cmp(y));
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut ia, mut ib) = (0usize, 0usize);
        let mut total = 0.0;
        for w in all.windows(2) {
            while ia < a.len() && a[ia] <= w[0] {
                ia += 1;
            }
            while ib < b.len() && b[ib] <= w[0] {
                ib += 1;
            }
            total += abs(ia as f64 / na - ib as f64 / nb) * (w[1] - w[0]);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::diagnostics::*;
    use super::*;

    fn zero_model(d: usize) -> TrueOutcomeModel {
        TrueOutcomeModel {
            v_o: alloc::vec![0.0; d],
            w_o: alloc::vec![0.0; d],
            v_f: alloc::vec![0.0; d],
            w_f: alloc::vec![0.0; d],
        }
    }

    #[test]
    fn dose_response_reference_values() {
        let m = zero_model(3);
        let x = FeatureVector(alloc::vec![0.5, -1.0, 2.0]);
        assert_eq!(true_overhauls(&m, &x, 0.0, 0.0), 3.5);
        assert_eq!(true_failures(&m, &x, 0.0, 0.0), 4.5);
        // σ(0) = 1/2, so the logit drops by 0.05·t; at t = 20 it is −1.
        let expected = 7.0 / (1.0 + core::f64::consts::E);
        assert!((true_overhauls(&m, &x, 0.0, 20.0) - expected).abs() < 1e-12);
        assert!((expected - 1.88258).abs() < 1e-5);
    }

    #[test]
    fn covariates_are_in_range_and_reproducible() {
        let a = sample_covariates(4000, 11);
        assert_eq!(a.len(), 4000);
        for c in &a {
            c.validate().unwrap();
            assert!(c.hours_at_start + c.hours_during <= 296_000.0);
        }
        assert_eq!(a, sample_covariates(4000, 11));
        let one = sample_covariates(1, 5);
        assert!((1..=7).contains(&one[0].machine_type));
        // Row i does not depend on n.
        assert_eq!(sample_covariates(10, 11)[..], a[..10]);
    }

    #[test]
    fn unbiased_assignment_is_uniform() {
        let b = BiasModel { w_b: alloc::vec![0.3; 2], lambda: 0.0 };
        let x = FeatureVector(alloc::vec![1.0, -0.5]);
        let draws: Vec<f64> = (0..100_000u64).map(|i| assign_treatment(&b, &x, 3, ContractId(i)).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.0).abs() < 0.1, "mean {mean}");
        assert!(draws.iter().all(|t| (0.0..=20.0).contains(t)));
        assert!(ks_statistic_uniform(&draws, 0.0, 20.0) < 0.01);
    }

    #[test]
    fn biased_assignment_mean() {
        let b = BiasModel { w_b: alloc::vec![], lambda: 30.0 };
        assert_eq!(b.beta_params(1.0), (4.0, 31.0));
        assert!((b.treatment_mean(1.0) - 20.0 * 4.0 / 35.0).abs() < 1e-12);
        assert!((b.treatment_mean(1.0) - 2.2857).abs() < 1e-4);
        // Empirical mean of the draws, with δ pinned near 1 through a large logit.
        let b = BiasModel { w_b: alloc::vec![1.0], lambda: 30.0 };
        let x = FeatureVector(alloc::vec![40.0]);
        let n = 100_000u64;
        let mean = (0..n).map(|i| assign_treatment(&b, &x, 9, ContractId(i)).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 20.0 * 4.0 / 35.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(BiasModel::sample(1, 3, -1.0).is_err());
        let b = BiasModel { w_b: alloc::vec![0.0], lambda: f64::NAN };
        assert!(assign_treatment(&b, &FeatureVector(alloc::vec![0.0]), 1, ContractId(0)).is_err());
    }

    #[test]
    fn dataset_split_and_consistency() {
        let grid = TreatmentGrid::default();
        let (ds, oracle) = generate_dataset(400, 30.0, 7, &grid).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.split(Split::Train).count(), 200);
        assert_eq!(ds.split(Split::Valid).count(), 100);
        assert_eq!(ds.split(Split::Test).count(), 100);
        for c in &ds.contracts {
            assert_eq!(oracle.outcome(OutcomeKind::Overhauls, c, c.pm_freq).unwrap(), c.overhauls);
            assert_eq!(oracle.outcome(OutcomeKind::Failures, c, c.pm_freq).unwrap(), c.failures);
        }
        let train = ds.split(Split::Train).next().unwrap();
        assert_eq!(oracle.test_curve(OutcomeKind::Overhauls, train, &[0.0]), Err(Error::NotTestContract(train.id)));
        assert!(generate_dataset(7, 0.0, 1, &grid).is_err());
    }

    #[test]
    fn training_split_is_standardized() {
        let (ds, _) = generate_dataset(400, 0.0, 2, &TreatmentGrid::default()).unwrap();
        let train: Vec<&Contract> = ds.split(Split::Train).collect();
        for j in 9..FEATURE_DIM {
            let m = train.iter().map(|c| c.features.0[j]).sum::<f64>() / train.len() as f64;
            let v = train.iter().map(|c| (c.features.0[j] - m).powi(2)).sum::<f64>() / train.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_order_independent() {
        // Regenerating a single contract from its id gives the same values.
        let grid = TreatmentGrid::default();
        let (ds, oracle) = generate_dataset(64, 20.0, 5, &grid).unwrap();
        let c = &ds.contracts[41];
        assert_eq!(sample_covariates(42, 5)[41], c.covariates);
        let noise = ContractNoise::sample(5, c.id);
        assert_eq!(oracle.records[&c.id].noise, noise);
        assert_eq!(assign_treatment(&oracle.bias, &c.features, 5, c.id).unwrap(), c.pm_freq);
    }

    #[test]
    fn wasserstein_reference_values() {
        assert_eq!(wasserstein_1(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!((wasserstein_1(&[0.0, 1.0], &[2.0, 3.0]) - 2.0).abs() < 1e-12);
        assert!((wasserstein_1(&[0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_reference_values() {
        assert!((ks_statistic_uniform(&[0.5], 0.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((ks_statistic_uniform(&[0.25, 0.75], 0.0, 1.0) - 0.25).abs() < 1e-12);
    }
}
