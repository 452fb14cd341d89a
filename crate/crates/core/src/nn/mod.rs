//! Minimal dense feed-forward networks with exact reverse-mode gradients.
//!
//! Everything here is deterministic given its seed: initialization,
//! minibatch shuffling and (in the estimators) GAN noise all come from
//! [`crate::rng`] streams.

mod checkpoint;
mod loss;
mod matrix;
mod mlp;
mod optim;
mod train;

pub use checkpoint::{LayerWeights, NetworkCheckpoint, CHECKPOINT_VERSION};
pub use loss::{loss_and_grad, mse, softmax_cross_entropy, softmax_rows, Loss};
pub use matrix::Matrix;
pub use mlp::{Activation, Dense, DenseGrad, Gradients, Mlp, Tape};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{train, EpochRecord, History, TrainConfig};
