use alloc::string::String;
use alloc::vec::Vec;

use super::OutcomeEstimator;
use crate::datagen::OutcomeKind;
use crate::domain::Contract;
use crate::error::{Error, Result};

/// Population-average outcome curve of an underlying estimator.
///
/// Every contract gets the same prediction: the mean over the population
/// supplied at construction.
#[derive(Debug, Clone)]
pub struct AverageEffect<E> {
    inner: E,
    population: Vec<Contract>,
    name: String,
}

pub fn average_effect_estimator<E: OutcomeEstimator>(inner: E, population: &[&Contract]) -> Result<AverageEffect<E>> {
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let name = alloc::format!("ate({})", inner.name());
    Ok(AverageEffect { inner, population: population.iter().map(|c| (*c).clone()).collect(), name })
}

impl<E: OutcomeEstimator> AverageEffect<E> {
    /// `t ↦ (1/n) Σᵢ ĝ(xᵢ, t)` over the population.
    pub fn mean_curve(&self, ts: &[f64]) -> Vec<f64> {
        let refs: Vec<&Contract> = self.population.iter().collect();
        let curves = self.inner.predict_population(&refs, ts);
        let n = curves.len() as f64;
        (0..ts.len()).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / n).collect()
    }

    pub fn population_size(&self) -> usize {
        self.population.len()
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: OutcomeEstimator> OutcomeEstimator for AverageEffect<E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn outcome(&self) -> OutcomeKind {
        self.inner.outcome()
    }

    fn predict_curve(&self, _contract: &Contract, ts: &[f64]) -> Vec<f64> {
        self.mean_curve(ts)
    }

    fn predict_population(&self, contracts: &[&Contract], ts: &[f64]) -> Vec<Vec<f64>> {
        let curve = self.mean_curve(ts);
        contracts.iter().map(|_| curve.clone()).collect()
    }
}
