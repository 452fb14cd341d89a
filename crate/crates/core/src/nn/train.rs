use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{mse, Loss};
use super::matrix::Matrix;
use super::mlp::Mlp;
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and epoch budget must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::invalid(format!("patience {} exceeds epoch budget {}", self.patience, self.max_epochs)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

fn full_mse(m: &Mlp, x: &Matrix, y: &Matrix) -> Result<f64> {
    Ok(mse(&m.forward(x)?, y)?.0)
}

/// Minibatch training on MSE with early stopping on the validation loss.
///
/// Returns the parameters of the best validation epoch. The per-epoch
/// history records the full-pass training loss after each epoch.
pub fn train(
    mut model: Mlp,
    train: (&Matrix, &Matrix),
    valid: (&Matrix, &Matrix),
    cfg: &TrainConfig,
) -> Result<(Mlp, History)> {
    cfg.validate()?;
    let (tx, ty) = train;
    let (vx, vy) = valid;
    if tx.rows() == 0 || vx.rows() == 0 {
        return Err(Error::EmptyPopulation);
    }
    if tx.rows() != ty.rows() || vx.rows() != vy.rows() {
        return Err(Error::shape("inputs and targets have different row counts"));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model);
    let mut rng = stream(cfg.seed, Purpose::Training, 0);
    let mut order: Vec<usize> = (0..tx.rows()).collect();

    let mut best = model.clone();
    let mut history = History { best_valid_loss: full_mse(&model, vx, vy)?, ..History::default() };
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = tx.select_rows(chunk);
            let by = ty.select_rows(chunk);
            let (loss, grads) = super::loss::loss_and_grad(&model, &bx, &by, Loss::Mse)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, reason: format!("non-finite minibatch loss {loss}") });
            }
            opt.step(&mut model, &grads);
        }
        let train_loss = full_mse(&model, tx, ty)?;
        let valid_loss = full_mse(&model, vx, vy)?;
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("non-finite loss (train {train_loss}, valid {valid_loss}); lower the learning rate"),
            });
        }
        history.epochs.push(EpochRecord { epoch, train_loss, valid_loss });
        if valid_loss < history.best_valid_loss {
            history.best_valid_loss = valid_loss;
            history.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}
