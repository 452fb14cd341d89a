//! Cost-optimal PM frequencies from predicted outcome curves.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::datagen::{Oracle, OutcomeKind};
use crate::domain::{Contract, ContractId, CostParams, TreatmentGrid};
use crate::error::{Error, Result};
use crate::estimators::{average_effect_estimator, EstimatorKind, OutcomeEstimator};

/// Costs within this many currency units of the minimum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Total cost at every grid point and its minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    grid: TreatmentGrid,
    costs: Vec<f64>,
    argmin_index: usize,
}

impl CostCurve {
    /// Ties within [`TIE_TOLERANCE`] go to the smallest PM frequency.
    pub fn from_costs(grid: &TreatmentGrid, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} costs for {} grid points", costs.len(), grid.len())));
        }
        if let Some(k) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite cost at t = {}", grid.points()[k])));
        }
        let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let argmin_index = costs.iter().position(|&c| c <= min + TIE_TOLERANCE).ok_or(Error::EmptyPopulation)?;
        Ok(Self { grid: grid.clone(), costs, argmin_index })
    }

    /// `c_pm·t + c_overhaul·o(t) + c_failure·f(t)` on the grid.
    ///
    /// Predicted counts may dip below zero and are used as they are.
    pub fn from_outcomes(grid: &TreatmentGrid, overhauls: &[f64], failures: &[f64], cp: &CostParams) -> Result<Self> {
        if overhauls.len() != grid.len() || failures.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} / {} predictions for {} grid points",
                overhauls.len(),
                failures.len(),
                grid.len()
            )));
        }
        let costs = grid
            .points()
            .iter()
            .zip(overhauls.iter().zip(failures))
            .map(|(&t, (&o, &f))| cp.c_pm * t + cp.c_overhaul * o + cp.c_failure * f)
            .collect();
        Self::from_costs(grid, costs)
    }

    pub fn grid(&self) -> &TreatmentGrid {
        &self.grid
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn argmin_index(&self) -> usize {
        self.argmin_index
    }

    pub fn argmin_t(&self) -> f64 {
        self.grid.points()[self.argmin_index]
    }

    pub fn argmin_cost(&self) -> f64 {
        self.costs[self.argmin_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyName {
    #[serde(rename = "SCIGAN-ITE")]
    SciganIte,
    #[serde(rename = "MLP-ITE")]
    MlpIte,
    #[serde(rename = "SCIGAN-ATE")]
    SciganAte,
    #[serde(rename = "ORACLE")]
    Oracle,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] =
        [PolicyName::SciganIte, PolicyName::MlpIte, PolicyName::SciganAte, PolicyName::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::SciganIte => "SCIGAN-ITE",
            PolicyName::MlpIte => "MLP-ITE",
            PolicyName::SciganAte => "SCIGAN-ATE",
            PolicyName::Oracle => "ORACLE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown policy `{s}`")))
    }

    /// Which estimator family the policy's outcome models come from.
    pub fn estimator(self) -> Option<EstimatorKind> {
        match self {
            PolicyName::SciganIte | PolicyName::SciganAte => Some(EstimatorKind::Scigan),
            PolicyName::MlpIte => Some(EstimatorKind::Mlp),
            PolicyName::Oracle => None,
        }
    }

    /// Whether the policy prescribes per contract.
    pub fn individualized(self) -> bool {
        !matches!(self, PolicyName::SciganAte)
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub id: ContractId,
    pub policy: PolicyName,
    pub prescribed_t: f64,
    /// Cost the policy expects at `prescribed_t`.
    pub estimated_cost: f64,
    /// Cost under the true outcome curves, once evaluated.
    pub true_cost: Option<f64>,
}

fn check_kinds(eo: &dyn OutcomeEstimator, ef: &dyn OutcomeEstimator) -> Result<()> {
    if eo.outcome() != OutcomeKind::Overhauls || ef.outcome() != OutcomeKind::Failures {
        return Err(Error::invalid(format!(
            "expected an overhaul and a failure estimator, got {} and {}",
            eo.name(),
            ef.name()
        )));
    }
    Ok(())
}

fn check_finite(e: &dyn OutcomeEstimator, grid: &TreatmentGrid, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NonFinitePrediction { estimator: e.name().into(), t: grid.points()[k] }),
        None => Ok(()),
    }
}

/// Estimated cost curve of one contract.
pub fn cost_curve(
    eo: &dyn OutcomeEstimator,
    ef: &dyn OutcomeEstimator,
    contract: &Contract,
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<CostCurve> {
    check_kinds(eo, ef)?;
    let o = eo.predict_curve(contract, grid.points());
    let f = ef.predict_curve(contract, grid.points());
    check_finite(eo, grid, &o)?;
    check_finite(ef, grid, &f)?;
    CostCurve::from_outcomes(grid, &o, &f, cp)
}

fn nonempty(population: &[&Contract]) -> Result<()> {
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    Ok(())
}

/// Each contract gets the minimizer of its own estimated cost curve.
pub fn prescribe_ite(
    policy: PolicyName,
    eo: &dyn OutcomeEstimator,
    ef: &dyn OutcomeEstimator,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<Vec<Prescription>> {
    nonempty(population)?;
    check_kinds(eo, ef)?;
    cp.validate()?;
    let os = eo.predict_population(population, grid.points());
    let fs = ef.predict_population(population, grid.points());
    population
        .iter()
        .zip(os.iter().zip(&fs))
        .map(|(c, (o, f))| {
            check_finite(eo, grid, o)?;
            check_finite(ef, grid, f)?;
            let curve = CostCurve::from_outcomes(grid, o, f, cp)?;
            Ok(Prescription {
                id: c.id,
                policy,
                prescribed_t: curve.argmin_t(),
                estimated_cost: curve.argmin_cost(),
                true_cost: None,
            })
        })
        .collect()
}

/// Cost curve of the population-average outcomes.
pub fn average_cost_curve(
    eo: &dyn OutcomeEstimator,
    ef: &dyn OutcomeEstimator,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<CostCurve> {
    check_kinds(eo, ef)?;
    let o = average_effect_estimator(eo, population)?.mean_curve(grid.points());
    let f = average_effect_estimator(ef, population)?.mean_curve(grid.points());
    check_finite(eo, grid, &o)?;
    check_finite(ef, grid, &f)?;
    CostCurve::from_outcomes(grid, &o, &f, cp)
}

/// One PM frequency for everyone: the minimizer of the average cost curve.
pub fn prescribe_ate(
    policy: PolicyName,
    eo: &dyn OutcomeEstimator,
    ef: &dyn OutcomeEstimator,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<Vec<Prescription>> {
    nonempty(population)?;
    cp.validate()?;
    let curve = average_cost_curve(eo, ef, population, cp, grid)?;
    Ok(population
        .iter()
        .map(|c| Prescription {
            id: c.id,
            policy,
            prescribed_t: curve.argmin_t(),
            estimated_cost: curve.argmin_cost(),
            true_cost: None,
        })
        .collect())
}

/// True cost curve of a test contract.
pub fn true_cost_curve(
    oracle: &Oracle,
    contract: &Contract,
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<CostCurve> {
    let o = oracle.test_curve(OutcomeKind::Overhauls, contract, grid.points())?;
    let f = oracle.test_curve(OutcomeKind::Failures, contract, grid.points())?;
    CostCurve::from_outcomes(grid, &o, &f, cp)
}

/// The ideal prescriptions: minimizers of the true cost curves.
pub fn prescribe_oracle(
    oracle: &Oracle,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<Vec<Prescription>> {
    nonempty(population)?;
    cp.validate()?;
    population
        .iter()
        .map(|c| {
            let curve = true_cost_curve(oracle, c, cp, grid)?;
            Ok(Prescription {
                id: c.id,
                policy: PolicyName::Oracle,
                prescribed_t: curve.argmin_t(),
                estimated_cost: curve.argmin_cost(),
                true_cost: Some(curve.argmin_cost()),
            })
        })
        .collect()
}

/// Dispatches to the ITE, ATE or oracle rule for `policy`. Learned
/// policies need `models` as (overhauls, failures) estimators of the family
/// named by [`PolicyName::estimator`].
pub fn prescribe(
    policy: PolicyName,
    models: Option<(&dyn OutcomeEstimator, &dyn OutcomeEstimator)>,
    oracle: &Oracle,
    population: &[&Contract],
    cp: &CostParams,
    grid: &TreatmentGrid,
) -> Result<Vec<Prescription>> {
    if policy == PolicyName::Oracle {
        return prescribe_oracle(oracle, population, cp, grid);
    }
    let (eo, ef) = models.ok_or_else(|| Error::invalid(format!("policy {policy} needs fitted outcome models")))?;
    if policy.individualized() {
        prescribe_ite(policy, eo, ef, population, cp, grid)
    } else {
        prescribe_ate(policy, eo, ef, population, cp, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_dataset;
    use crate::domain::Split;
    use crate::estimators::OracleEstimator;
    use proptest::prelude::*;

    struct Const(OutcomeKind, f64);

    impl OutcomeEstimator for Const {
        fn name(&self) -> &str {
            "const"
        }
        fn outcome(&self) -> OutcomeKind {
            self.0
        }
        fn predict_curve(&self, _: &Contract, ts: &[f64]) -> Vec<f64> {
            alloc::vec![self.1; ts.len()]
        }
    }

    struct Broken;

    impl OutcomeEstimator for Broken {
        fn name(&self) -> &str {
            "broken/failures"
        }
        fn outcome(&self) -> OutcomeKind {
            OutcomeKind::Failures
        }
        fn predict_curve(&self, _: &Contract, ts: &[f64]) -> Vec<f64> {
            ts.iter().map(|&t| if t > 10.0 { f64::NAN } else { 1.0 }).collect()
        }
    }

    fn setup(n: usize, seed: u64) -> (crate::domain::Dataset, Oracle, TreatmentGrid) {
        let grid = TreatmentGrid::default();
        let (ds, oracle) = generate_dataset(n, 20.0, seed, &grid).unwrap();
        (ds, oracle, grid)
    }

    fn sweep_cost(t: f64, o: f64, f: f64, cp: &CostParams) -> f64 {
        cp.c_pm * t + cp.c_overhaul * o + cp.c_failure * f
    }

    #[test]
    fn zero_costs_tie_break_to_no_maintenance() {
        let grid = TreatmentGrid::default();
        let c = CostCurve::from_costs(&grid, alloc::vec![0.0; grid.len()]).unwrap();
        assert_eq!((c.argmin_index(), c.argmin_t(), c.argmin_cost()), (0, 0.0, 0.0));
        let mut costs = alloc::vec![5.0; grid.len()];
        costs[30] = 1.0;
        costs[40] = 1.0 + 0.5 * TIE_TOLERANCE;
        costs[20] = 1.0 + 2.0 * TIE_TOLERANCE;
        assert_eq!(CostCurve::from_costs(&grid, costs).unwrap().argmin_index(), 30);
    }

    #[test]
    fn constant_predictors_give_a_linear_curve() {
        let (ds, _, grid) = setup(40, 1);
        let cp = CostParams::default();
        let curve = cost_curve(
            &Const(OutcomeKind::Overhauls, 1.0),
            &Const(OutcomeKind::Failures, 1.0),
            &ds.contracts[0],
            &cp,
            &grid,
        )
        .unwrap();
        for (t, c) in grid.points().iter().zip(curve.costs()) {
            assert!((c - (73.0 * t + 311.0)).abs() < 1e-9);
        }
        assert_eq!(curve.argmin_t(), 0.0);
        assert_eq!(curve.argmin_cost(), 311.0);
    }

    #[test]
    fn oracle_curve_is_the_plugged_in_truth() {
        let (ds, oracle, grid) = setup(80, 2);
        let cp = CostParams::default();
        let eo = OracleEstimator::new(&oracle, OutcomeKind::Overhauls);
        let ef = OracleEstimator::new(&oracle, OutcomeKind::Failures);
        for c in ds.split(Split::Test).take(10) {
            let curve = cost_curve(&eo, &ef, c, &cp, &grid).unwrap();
            let eps_o = oracle.records[&c.id].noise.eps_o;
            let eps_f = oracle.records[&c.id].noise.eps_f;
            for (k, &t) in grid.points().iter().enumerate() {
                let o = 7.0 * sig(dotv(&oracle.model.v_o, c) - 0.1 * sig(dotv(&oracle.model.w_o, c)) * t + eps_o);
                let f = 9.0 * sig(dotv(&oracle.model.v_f, c) - 0.1 * sig(dotv(&oracle.model.w_f, c)) * t + eps_f);
                assert!((curve.costs()[k] - sweep_cost(t, o, f, &cp)).abs() < 1e-12 * curve.costs()[k].max(1.0));
            }
        }
    }

    fn sig(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    fn dotv(w: &[f64], c: &Contract) -> f64 {
        w.iter().zip(c.features.as_slice()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn non_finite_predictions_name_the_estimator() {
        let (ds, _, grid) = setup(40, 3);
        let err =
            cost_curve(&Const(OutcomeKind::Overhauls, 1.0), &Broken, &ds.contracts[0], &CostParams::default(), &grid)
                .unwrap_err();
        match err {
            Error::NonFinitePrediction { estimator, t } => {
                assert_eq!(estimator, "broken/failures");
                assert!(t > 10.0);
            }
            e => panic!("{e}"),
        }
        let swapped =
            cost_curve(&Broken, &Const(OutcomeKind::Overhauls, 1.0), &ds.contracts[0], &CostParams::default(), &grid);
        assert!(matches!(swapped, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn oracle_estimators_reproduce_oracle_prescriptions() {
        let (ds, oracle, grid) = setup(200, 4);
        let cp = CostParams { c_pm: 73.0 / 3.0, ..CostParams::default() };
        let test: Vec<&Contract> = ds.split(Split::Test).collect();
        let eo = OracleEstimator::new(&oracle, OutcomeKind::Overhauls);
        let ef = OracleEstimator::new(&oracle, OutcomeKind::Failures);
        let ite = prescribe_ite(PolicyName::SciganIte, &eo, &ef, &test, &cp, &grid).unwrap();
        let ideal = prescribe_oracle(&oracle, &test, &cp, &grid).unwrap();
        for (a, b) in ite.iter().zip(&ideal) {
            assert_eq!((a.id, a.prescribed_t), (b.id, b.prescribed_t));
            assert!((0.0..=20.0).contains(&a.prescribed_t));
        }
    }

    #[test]
    fn identical_contracts_get_identical_prescriptions() {
        let (ds, oracle, grid) = setup(40, 5);
        let cp = CostParams { c_pm: 10.0, ..CostParams::default() };
        let c = ds.split(Split::Test).next().unwrap();
        let pop = [c, c, c];
        let eo = OracleEstimator::new(&oracle, OutcomeKind::Overhauls);
        let ef = OracleEstimator::new(&oracle, OutcomeKind::Failures);
        let ite = prescribe_ite(PolicyName::MlpIte, &eo, &ef, &pop, &cp, &grid).unwrap();
        let ate = prescribe_ate(PolicyName::SciganAte, &eo, &ef, &pop, &cp, &grid).unwrap();
        assert!(ite.windows(2).all(|w| w[0].prescribed_t == w[1].prescribed_t));
        assert_eq!(ite[0].prescribed_t, ate[0].prescribed_t);
        assert!((ite[0].estimated_cost - ate[0].estimated_cost).abs() < 1e-9);
    }

    #[test]
    fn ate_is_uniform_and_dominated_by_the_oracle() {
        let (ds, oracle, grid) = setup(400, 6);
        let test: Vec<&Contract> = ds.split(Split::Test).collect();
        for cp in [CostParams::default(), CostParams { c_pm: 73.0 / 3.0, ..CostParams::default() }] {
            let eo = OracleEstimator::new(&oracle, OutcomeKind::Overhauls);
            let ef = OracleEstimator::new(&oracle, OutcomeKind::Failures);
            let ate = prescribe_ate(PolicyName::SciganAte, &eo, &ef, &test, &cp, &grid).unwrap();
            assert!(ate.windows(2).all(|w| w[0].prescribed_t == w[1].prescribed_t));
            let ideal = prescribe_oracle(&oracle, &test, &cp, &grid).unwrap();
            let mean_true = |ps: &[Prescription]| {
                ps.iter()
                    .zip(&test)
                    .map(|(p, c)| {
                        let curve = true_cost_curve(&oracle, c, &cp, &grid).unwrap();
                        curve.costs()[grid.index_of(p.prescribed_t).unwrap()]
                    })
                    .sum::<f64>()
                    / test.len() as f64
            };
            assert!(mean_true(&ate) >= mean_true(&ideal));
        }
    }

    #[test]
    fn cheaper_maintenance_never_lowers_the_optimum() {
        let (ds, oracle, grid) = setup(400, 7);
        let test: Vec<&Contract> = ds.split(Split::Test).take(100).collect();
        assert_eq!(test.len(), 100);
        let dear = CostParams::default();
        let free = CostParams { c_pm: 0.0, ..dear };
        for c in test {
            // Brute force over the grid, independent of CostCurve.
            let brute = |cp: &CostParams| {
                let mut best = (f64::INFINITY, 0.0);
                for &t in grid.points() {
                    let o = oracle.outcome(OutcomeKind::Overhauls, c, t).unwrap();
                    let f = oracle.outcome(OutcomeKind::Failures, c, t).unwrap();
                    let v = sweep_cost(t, o, f, cp);
                    if v < best.0 - TIE_TOLERANCE {
                        best = (v, t);
                    }
                }
                best.1
            };
            assert!(brute(&free) >= brute(&dear));
            let curve = CostCurve::from_outcomes(
                &grid,
                &oracle.curve(OutcomeKind::Overhauls, c, grid.points()).unwrap(),
                &oracle.curve(OutcomeKind::Failures, c, grid.points()).unwrap(),
                &free,
            )
            .unwrap();
            assert_eq!(curve.argmin_t(), brute(&free));
        }
    }

    #[test]
    fn default_costs_make_no_maintenance_optimal_everywhere() {
        // The marginal saving of one PM event is bounded by
        // (7·207 + 9·104)·0.1/4 ≈ 59.6 < 73, so every true cost curve is
        // increasing.
        let bound = (7.0 * 207.0 + 9.0 * 104.0) * 0.1 / 4.0;
        assert!(bound < CostParams::default().c_pm);
        let (ds, oracle, grid) = setup(400, 8);
        let test: Vec<&Contract> = ds.split(Split::Test).collect();
        let ideal = prescribe_oracle(&oracle, &test, &CostParams::default(), &grid).unwrap();
        assert!(ideal.iter().all(|p| p.prescribed_t == 0.0));
    }

    #[test]
    fn non_test_contracts_have_no_oracle_prescription() {
        let (ds, oracle, grid) = setup(40, 9);
        let train: Vec<&Contract> = ds.split(Split::Train).take(1).collect();
        assert!(matches!(
            prescribe_oracle(&oracle, &train, &CostParams::default(), &grid),
            Err(Error::NotTestContract(_))
        ));
        assert!(matches!(prescribe_oracle(&oracle, &[], &CostParams::default(), &grid), Err(Error::EmptyPopulation)));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyName::ALL {
            assert_eq!(PolicyName::parse(p.as_str()).unwrap(), p);
        }
        assert!(PolicyName::parse("nope").is_err());
        assert!(!PolicyName::SciganAte.individualized());
    }

    proptest! {
        #[test]
        fn scaling_all_costs_keeps_prescriptions(seed in 0u64..20, alpha in 0.01f64..100.0, k in 1u32..6) {
            let (ds, oracle, grid) = setup(40, seed);
            let cp = CostParams { c_pm: 73.0 / k as f64, ..CostParams::default() };
            let test: Vec<&Contract> = ds.split(Split::Test).collect();
            let a = prescribe_oracle(&oracle, &test, &cp, &grid).unwrap();
            let b = prescribe_oracle(&oracle, &test, &cp.scaled(alpha), &grid).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.prescribed_t, y.prescribed_t);
            }
        }
    }
}
