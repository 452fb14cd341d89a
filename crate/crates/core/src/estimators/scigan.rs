//! Counterfactual GAN plus an inference network trained on augmented data.
//!
//! The generator sees a contract's features, its factual PM frequency and
//! outcome, a noise vector and a target dosage, and proposes the outcome at
//! that dosage. The discriminator sees the features and a set of D
//! (dosage, outcome) pairs, exactly one of which is factual, and scores
//! which one it is. This is a single set-level discriminator, not the
//! two-level hierarchy of the original architecture.
//!
//! Target dosages are uniform on `[0, 20]`, not drawn from the observed
//! treatment distribution, so generated samples cover the PM frequencies
//! the biased policy rarely chose.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fit_regressor, EstimatorConfig, EstimatorKind, FittedEstimator, Samples};
use crate::datagen::OutcomeKind;
use crate::domain::{Contract, PM_FREQ_MAX};
use crate::error::{Error, Result};
use crate::math::ln;
use crate::nn::{softmax_cross_entropy, Activation, Matrix, Mlp, Optimizer, OptimizerKind};
use crate::rng::{derive_seed, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SciganConfig {
    /// Size D of each discriminator set, factual pair included.
    pub dosage_samples: usize,
    pub noise_dim: usize,
    pub reconstruction_weight: f64,
    /// Generated (dosage, outcome) pairs added per training contract.
    pub augmentation: usize,
    pub gan_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_width: usize,
    /// Consecutive collapsed-discriminator epochs tolerated before aborting.
    pub divergence_window: usize,
    pub optimizer: OptimizerKind,
    /// Upper bound on the spectral norm of each discriminator layer,
    /// enforced after every update; `None` leaves it unconstrained.
    #[serde(default)]
    pub discriminator_lipschitz: Option<f64>,
}

impl Default for SciganConfig {
    fn default() -> Self {
        Self {
            dosage_samples: 6,
            noise_dim: 10,
            reconstruction_weight: 1.0,
            augmentation: 5,
            gan_epochs: 60,
            learning_rate: 1e-3,
            batch_size: 64,
            hidden_width: 64,
            divergence_window: 10,
            optimizer: OptimizerKind::adam(),
            discriminator_lipschitz: Some(1.5),
        }
    }
}

impl SciganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dosage_samples < 2 {
            return Err(Error::invalid("the discriminator needs at least two dosages per set"));
        }
        if self.gan_epochs == 0 || self.batch_size == 0 || self.hidden_width == 0 || self.divergence_window == 0 {
            return Err(Error::invalid("GAN epochs, batch size, width and divergence window must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("GAN learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.discriminator_lipschitz.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("discriminator Lipschitz bound must be positive"));
        }
        if !(self.reconstruction_weight >= 0.0 && self.reconstruction_weight.is_finite()) {
            return Err(Error::invalid("reconstruction weight must be finite and non-negative"));
        }
        Ok(())
    }

    /// Discriminator loss below this, sustained, counts as a collapsed GAN.
    pub fn collapse_threshold(&self) -> f64 {
        0.1 * ln(self.dosage_samples as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    pub discriminator_loss: f64,
    pub discriminator_accuracy: f64,
    /// Mean squared error at the factual dosage, in units of the
    /// generator's outcome range.
    pub reconstruction_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanReport {
    pub epochs: Vec<GanEpoch>,
    pub augmented_rows: usize,
}

/// Trained generator and discriminator for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    /// Outcome value mapped to 0; generated outcomes lie in `(y_lo, y_hi)`.
    pub y_lo: f64,
    pub y_hi: f64,
    pub dosage_samples: usize,
    pub noise_dim: usize,
}

fn push_generator_row(buf: &mut Vec<f64>, x: &[f64], t_f: f64, y_f: f64, z: &[f64], s: f64) {
    buf.extend_from_slice(x);
    buf.push(t_f / PM_FREQ_MAX);
    buf.push(y_f);
    buf.push(s / PM_FREQ_MAX);
    buf.push((s - t_f) / PM_FREQ_MAX);
    buf.extend_from_slice(z);
}

fn noise(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn uniform_dosage(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.0..=PM_FREQ_MAX)
}

/// One minibatch of discriminator sets.
struct SetBatch {
    /// Generator input: `D − 1` counterfactual rows per contract, then one
    /// factual-dosage row per contract.
    gen_in: Matrix,
    dosages: Vec<f64>,
    factual_slot: Vec<usize>,
}

impl GanModel {
    fn standardize(&self, y: f64) -> f64 {
        (y - self.y_lo) / (self.y_hi - self.y_lo)
    }

    fn unstandardize(&self, u: f64) -> f64 {
        self.y_lo + (self.y_hi - self.y_lo) * u
    }

    /// Generated outcome at dosage `s`, in outcome units.
    pub fn generate(&self, x: &[f64], t_f: f64, y_f: f64, z: &[f64], s: f64) -> Result<f64> {
        let mut buf = Vec::new();
        push_generator_row(&mut buf, x, t_f, self.standardize(y_f), z, s);
        let out = self.generator.forward(&Matrix::from_vec(1, buf.len(), buf)?)?;
        Ok(self.unstandardize(out.data()[0]))
    }

    fn sample_sets(&self, batch: &[&Contract], kind: OutcomeKind, rng: &mut ChaCha8Rng) -> Result<SetBatch> {
        let d = self.dosage_samples;
        let mut buf = Vec::new();
        let mut dosages = Vec::with_capacity(batch.len() * (d - 1));
        let mut recon = Vec::new();
        let mut factual_slot = Vec::with_capacity(batch.len());
        for c in batch {
            let x = c.features.as_slice();
            let y = self.standardize(kind.observed(c));
            let z = noise(rng, self.noise_dim);
            for _ in 0..d - 1 {
                let s = uniform_dosage(rng);
                dosages.push(s);
                push_generator_row(&mut buf, x, c.pm_freq, y, &z, s);
            }
            push_generator_row(&mut recon, x, c.pm_freq, y, &z, c.pm_freq);
            factual_slot.push(rng.random_range(0..d));
        }
        buf.extend(recon);
        let rows = batch.len() * d;
        let cols = buf.len() / rows.max(1);
        Ok(SetBatch { gen_in: Matrix::from_vec(rows, cols, buf)?, dosages, factual_slot })
    }

    /// Discriminator input and the column holding each generated outcome.
    fn discriminator_input(
        &self,
        batch: &[&Contract],
        kind: OutcomeKind,
        sets: &SetBatch,
        generated: &Matrix,
    ) -> Result<(Matrix, Vec<usize>)> {
        let d = self.dosage_samples;
        let dim = batch.first().map_or(0, |c| c.features.dim());
        let cols = dim + 2 * d;
        let mut data = Vec::with_capacity(batch.len() * cols);
        let mut gen_cols = Vec::with_capacity(batch.len() * (d - 1));
        for (i, c) in batch.iter().enumerate() {
            data.extend_from_slice(c.features.as_slice());
            let mut g = 0;
            for slot in 0..d {
                if slot == sets.factual_slot[i] {
                    data.push(c.pm_freq / PM_FREQ_MAX);
                    data.push(self.standardize(kind.observed(c)));
                } else {
                    let row = i * (d - 1) + g;
                    data.push(sets.dosages[row] / PM_FREQ_MAX);
                    gen_cols.push(dim + 2 * slot + 1);
                    data.push(generated.data()[row]);
                    g += 1;
                }
            }
        }
        Ok((Matrix::from_vec(batch.len(), cols, data)?, gen_cols))
    }

    fn one_hot(&self, slots: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(slots.len(), self.dosage_samples);
        for (i, &s) in slots.iter().enumerate() {
            m.set(i, s, 1.0);
        }
        m
    }

    /// Fraction of fresh sets in which the discriminator ranks the factual
    /// pair highest.
    pub fn discriminator_accuracy(&self, contracts: &[Contract], kind: OutcomeKind, seed: u64) -> Result<f64> {
        let mut rng = stream(seed, Purpose::Training, 3);
        let batch: Vec<&Contract> = contracts.iter().collect();
        let sets = self.sample_sets(&batch, kind, &mut rng)?;
        let generated = self.generator.forward(&sets.gen_in)?;
        let (dx, _) = self.discriminator_input(&batch, kind, &sets, &generated)?;
        let logits = self.discriminator.forward(&dx)?;
        Ok(accuracy(&logits, &sets.factual_slot))
    }

    /// Mean squared error of the generator at the factual dosage, in
    /// outcome units.
    pub fn reconstruction_mse(&self, contracts: &[Contract], kind: OutcomeKind, seed: u64) -> Result<f64> {
        let mut rng = stream(seed, Purpose::Training, 4);
        let mut total = 0.0;
        for c in contracts {
            let z = noise(&mut rng, self.noise_dim);
            let y = kind.observed(c);
            let r = self.generate(c.features.as_slice(), c.pm_freq, y, &z, c.pm_freq)? - y;
            total += r * r;
        }
        Ok(total / contracts.len().max(1) as f64)
    }
}

fn accuracy(logits: &Matrix, slots: &[usize]) -> f64 {
    let hits = slots
        .iter()
        .enumerate()
        .filter(|&(i, &s)| {
            let row = logits.row(i);
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            best == s
        })
        .count();
    hits as f64 / slots.len().max(1) as f64
}

/// Rescales every layer whose largest singular value exceeds `bound`.
/// The singular value comes from power iteration.
fn clip_spectral_norm(m: &mut Mlp, bound: f64) {
    for layer in m.layers_mut() {
        let w = &mut layer.weights;
        let (r, c) = (w.rows(), w.cols());
        let mut v = alloc::vec![1.0 / crate::math::sqrt(c as f64); c];
        let mut sigma = 0.0;
        for _ in 0..20 {
            let mut u = alloc::vec![0.0; r];
            for i in 0..r {
                u[i] = (0..c).map(|j| w.get(i, j) * v[j]).sum();
            }
            let nu = crate::math::sqrt(u.iter().map(|x| x * x).sum());
            if nu == 0.0 {
                return;
            }
            u.iter_mut().for_each(|x| *x /= nu);
            for j in 0..c {
                v[j] = (0..r).map(|i| w.get(i, j) * u[i]).sum();
            }
            sigma = crate::math::sqrt(v.iter().map(|x| x * x).sum());
            v.iter_mut().for_each(|x| *x /= sigma);
        }
        if sigma > bound {
            w.data_mut().iter_mut().for_each(|x| *x *= bound / sigma);
        }
    }
}

/// Observed outcome range widened by a tenth on each side.
fn outcome_bounds(ys: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let margin = if hi > lo { 0.1 * (hi - lo) } else { 1.0 };
    (lo - margin, hi + margin)
}

/// Counts consecutive epochs in which the discriminator wins outright.
#[derive(Debug, Clone, Copy)]
struct CollapseMonitor {
    threshold: f64,
    window: usize,
    run: usize,
}

impl CollapseMonitor {
    fn new(cfg: &SciganConfig) -> Self {
        Self { threshold: cfg.collapse_threshold(), window: cfg.divergence_window, run: 0 }
    }

    /// Records one epoch's discriminator loss; true once the window is full.
    fn observe(&mut self, d_loss: f64) -> bool {
        self.run = if d_loss < self.threshold { self.run + 1 } else { 0 };
        self.run >= self.window
    }
}

/// Adversarial phase: fits the generator and discriminator on factual data.
pub fn train_gan(
    train: &[Contract],
    kind: OutcomeKind,
    cfg: &SciganConfig,
    seed: u64,
) -> Result<(GanModel, GanReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let dim = train[0].features.dim();
    if train.iter().any(|c| c.features.dim() != dim) {
        return Err(Error::shape("contracts have different feature dimensions"));
    }
    let d = cfg.dosage_samples;
    let (y_lo, y_hi) = outcome_bounds(train.iter().map(|c| kind.observed(c)));
    let h = cfg.hidden_width;
    let generator = Mlp::new(
        &[dim + 4 + cfg.noise_dim, h, h, 1],
        Activation::Relu,
        Activation::Sigmoid,
        &mut stream(seed, Purpose::Training, 10),
    )?;
    let discriminator = Mlp::new(
        &[dim + 2 * d, h, h, d],
        Activation::Relu,
        Activation::Identity,
        &mut stream(seed, Purpose::Training, 11),
    )?;
    let mut model = GanModel { generator, discriminator, y_lo, y_hi, dosage_samples: d, noise_dim: cfg.noise_dim };
    let mut opt_g = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model.generator);
    let mut opt_d = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model.discriminator);
    let mut rng = stream(seed, Purpose::Training, 12);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = GanReport::default();
    let mut monitor = CollapseMonitor::new(cfg);

    for epoch in 1..=cfg.gan_epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let (mut d_loss, mut d_acc, mut recon, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Contract> = chunk.iter().map(|&i| &train[i]).collect();
            let b = batch.len();
            let sets = model.sample_sets(&batch, kind, &mut rng)?;
            let targets = model.one_hot(&sets.factual_slot);
            let g_tape = model.generator.forward_tape(&sets.gen_in)?;
            let (dx, gen_cols) = model.discriminator_input(&batch, kind, &sets, g_tape.output())?;

            // Discriminator step.
            let d_tape = model.discriminator.forward_tape(&dx)?;
            let (loss, d_logits) = softmax_cross_entropy(d_tape.output(), &targets)?;
            d_acc += accuracy(d_tape.output(), &sets.factual_slot);
            let (d_grads, _) = model.discriminator.backward(&d_tape, &d_logits)?;
            opt_d.step(&mut model.discriminator, &d_grads);
            if let Some(bound) = cfg.discriminator_lipschitz {
                clip_spectral_norm(&mut model.discriminator, bound);
            }

            // Generator step against the updated discriminator: maximize its
            // cross-entropy and reproduce the factual outcome.
            let d_tape = model.discriminator.forward_tape(&dx)?;
            let (_, d_logits) = softmax_cross_entropy(d_tape.output(), &targets)?;
            let (_, d_input) = model.discriminator.backward(&d_tape, &d_logits)?;
            let gen_out = g_tape.output();
            let mut d_gen = Matrix::zeros(gen_out.rows(), 1);
            for (row, &col) in gen_cols.iter().enumerate() {
                let i = row / (d - 1);
                d_gen.data_mut()[row] = -d_input.get(i, col);
            }
            let mut batch_recon = 0.0;
            for (i, c) in batch.iter().enumerate() {
                let row = b * (d - 1) + i;
                let r = gen_out.data()[row] - model.standardize(kind.observed(c));
                batch_recon += r * r;
                d_gen.data_mut()[row] = 2.0 * cfg.reconstruction_weight * r / b as f64;
            }
            let (g_grads, _) = model.generator.backward(&g_tape, &d_gen)?;
            opt_g.step(&mut model.generator, &g_grads);

            d_loss += loss;
            recon += batch_recon / b as f64;
            batches += 1;
        }
        let n = batches as f64;
        let rec = GanEpoch {
            epoch,
            discriminator_loss: d_loss / n,
            discriminator_accuracy: d_acc / n,
            reconstruction_mse: recon / n,
        };
        if !rec.discriminator_loss.is_finite() || !rec.reconstruction_mse.is_finite() || !model.generator.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("non-finite GAN loss; lower the GAN learning rate (now {})", cfg.learning_rate),
            });
        }
        let d_loss = rec.discriminator_loss;
        report.epochs.push(rec);
        if monitor.observe(d_loss) {
            return Err(Error::Divergence {
                epoch,
                reason: format!(
                    "discriminator loss below {:.4} for {} consecutive epochs; lower the GAN learning rate (now {})",
                    monitor.threshold, monitor.run, cfg.learning_rate
                ),
            });
        }
    }
    Ok((model, report))
}

/// Generated `(dosage, outcome)` pairs at uniform dosages, `per_contract`
/// for each training contract, plus every factual pair.
fn augmented_samples<'a>(
    gan: &GanModel,
    train: &'a [Contract],
    kind: OutcomeKind,
    per_contract: usize,
    seed: u64,
) -> Result<Samples<'a>> {
    let mut samples = Samples::factual(train, kind);
    if per_contract == 0 {
        return Ok(samples);
    }
    let mut rng = stream(seed, Purpose::Training, 20);
    let mut buf = Vec::new();
    for c in train {
        let x = c.features.as_slice();
        let y = gan.standardize(kind.observed(c));
        for _ in 0..per_contract {
            let z = noise(&mut rng, gan.noise_dim);
            let s = uniform_dosage(&mut rng);
            push_generator_row(&mut buf, x, c.pm_freq, y, &z, s);
            samples.rows.push((x, s));
        }
    }
    let rows = train.len() * per_contract;
    let out = gan.generator.forward(&Matrix::from_vec(rows, buf.len() / rows, buf)?)?;
    samples.targets.extend(out.data().iter().map(|&u| gan.unstandardize(u)));
    if samples.targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { epoch: 0, reason: "generator produced non-finite outcomes".into() });
    }
    Ok(samples)
}

/// Two-phase counterfactual estimator.
///
/// Model selection for the inference network uses the factual validation
/// outcomes, the only ones observable.
pub fn fit_scigan(
    train: &[Contract],
    valid: &[Contract],
    kind: OutcomeKind,
    cfg: &EstimatorConfig,
) -> Result<FittedEstimator> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    cfg.validate()?;
    let (gan, mut report) = train_gan(train, kind, &cfg.scigan, derive_seed(cfg.train.seed, 0x6a4))?;
    let augmented = augmented_samples(&gan, train, kind, cfg.scigan.augmentation, derive_seed(cfg.train.seed, 0x6a5))?;
    report.augmented_rows = augmented.rows.len();
    let (reg, trials, history) = fit_regressor(&augmented, &Samples::factual(valid, kind), cfg)?;
    Ok(FittedEstimator::new(EstimatorKind::Scigan, kind, reg, trials, history, Some(report)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ContractId, Covariates, FeatureVector};

    /// One feature, randomized dosage, noiseless outcome `2 + x + 0.1 t`.
    fn toy(n: usize, seed: u64) -> Vec<Contract> {
        let mut rng = stream(seed, Purpose::Training, 77);
        (0..n)
            .map(|i| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let t: f64 = rng.random_range(0.0..=PM_FREQ_MAX);
                let y = 2.0 + x + 0.1 * t;
                Contract {
                    id: ContractId(i as u64),
                    covariates: Covariates {
                        machine_type: 1,
                        age_at_start: 0.0,
                        hours_at_start: 0.0,
                        hours_during: 0.0,
                        avg_hours_per_year: 0.0,
                        contract_type: 1,
                        duration_days: 365.0,
                    },
                    features: FeatureVector(alloc::vec![x]),
                    pm_freq: t,
                    overhauls: y,
                    failures: y,
                }
            })
            .collect()
    }

    fn toy_cfg() -> SciganConfig {
        SciganConfig { gan_epochs: 150, hidden_width: 32, batch_size: 32, ..SciganConfig::default() }
    }

    #[test]
    fn toy_gan_reaches_equilibrium_and_reconstructs() {
        let train = toy(400, 1);
        let (gan, report) = train_gan(&train, OutcomeKind::Overhauls, &toy_cfg(), 5).unwrap();
        assert_eq!(report.epochs.len(), 150);
        let fresh = toy(3000, 2);
        let acc = gan.discriminator_accuracy(&fresh, OutcomeKind::Overhauls, 9).unwrap();
        let chance = 1.0 / gan.dosage_samples as f64;
        assert!((acc - chance).abs() < 0.1, "accuracy {acc} vs chance {chance}");
        let mse = gan.reconstruction_mse(&fresh, OutcomeKind::Overhauls, 9).unwrap();
        assert!(mse < 0.05, "reconstruction mse {mse}");
    }

    #[test]
    fn discriminator_scores_are_a_simplex() {
        let train = toy(50, 3);
        let (gan, _) =
            train_gan(&train, OutcomeKind::Failures, &SciganConfig { gan_epochs: 2, ..toy_cfg() }, 1).unwrap();
        let batch: Vec<&Contract> = train.iter().collect();
        let mut rng = stream(0, Purpose::Training, 0);
        let sets = gan.sample_sets(&batch, OutcomeKind::Failures, &mut rng).unwrap();
        let generated = gan.generator.forward(&sets.gen_in).unwrap();
        let (dx, gen_cols) = gan.discriminator_input(&batch, OutcomeKind::Failures, &sets, &generated).unwrap();
        assert_eq!(gen_cols.len(), 50 * (gan.dosage_samples - 1));
        let p = crate::nn::softmax_rows(&gan.discriminator.forward(&dx).unwrap());
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row(r).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // Factual pairs sit where the slot index says.
        for (i, c) in train.iter().enumerate() {
            let slot = sets.factual_slot[i];
            assert_eq!(dx.get(i, 1 + 2 * slot), c.pm_freq / PM_FREQ_MAX);
        }
    }

    #[test]
    fn collapse_needs_a_full_window_of_consecutive_epochs() {
        let cfg = SciganConfig { divergence_window: 3, ..SciganConfig::default() };
        let low = 0.5 * cfg.collapse_threshold();
        let high = 2.0 * cfg.collapse_threshold();
        let mut m = CollapseMonitor::new(&cfg);
        assert!(!m.observe(low));
        assert!(!m.observe(low));
        assert!(!m.observe(high));
        assert!(!m.observe(low));
        assert!(!m.observe(low));
        assert!(m.observe(low));
        assert!(!m.observe(cfg.collapse_threshold()));
    }

    #[test]
    fn augmentation_adds_uniform_dosages() {
        let train = toy(100, 6);
        let (gan, _) =
            train_gan(&train, OutcomeKind::Overhauls, &SciganConfig { gan_epochs: 1, ..toy_cfg() }, 3).unwrap();
        let s = augmented_samples(&gan, &train, OutcomeKind::Overhauls, 5, 8).unwrap();
        assert_eq!(s.rows.len(), 600);
        assert_eq!(s.targets.len(), 600);
        for (c, (row, y)) in train.iter().zip(s.rows.iter().zip(&s.targets)) {
            assert_eq!((row.1, *y), (c.pm_freq, c.overhauls));
        }
        assert!(s.rows[100..].iter().all(|r| (0.0..=PM_FREQ_MAX).contains(&r.1)));
    }

    #[test]
    fn spectral_clip_matches_diagonal_singular_values() {
        use crate::nn::Dense;
        let mut w = Matrix::zeros(3, 2);
        w.set(0, 0, 3.0);
        w.set(1, 1, -0.5);
        let mut m = Mlp::from_layers(alloc::vec![Dense {
            weights: w,
            bias: alloc::vec![0.0; 2],
            activation: Activation::Identity
        }])
        .unwrap();
        clip_spectral_norm(&mut m, 1.5);
        let w = &m.layers()[0].weights;
        assert!((w.get(0, 0) - 1.5).abs() < 1e-9);
        assert!((w.get(1, 1) + 0.25).abs() < 1e-9);
        // Already within the bound: untouched.
        let before = m.params();
        clip_spectral_norm(&mut m, 2.0);
        assert_eq!(before, m.params());
    }

    #[test]
    fn config_validation() {
        assert!(SciganConfig { discriminator_lipschitz: Some(0.0), ..SciganConfig::default() }.validate().is_err());
        assert!(SciganConfig::default().validate().is_ok());
        assert!(SciganConfig { dosage_samples: 1, ..SciganConfig::default() }.validate().is_err());
        assert!((SciganConfig::default().collapse_threshold() - 0.1 * 6f64.ln()).abs() < 1e-15);
    }
}
