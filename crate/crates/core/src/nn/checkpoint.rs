use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights of one dense layer. `weights[i * out + j]` connects input `i`
/// to unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Self-describing serialized form of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub version: u32,
    /// Input width first, then every layer's output width.
    pub widths: Vec<usize>,
    pub layers: Vec<LayerWeights>,
}

impl NetworkCheckpoint {
    pub fn from_mlp(m: &Mlp) -> Self {
        let layers = m
            .layers()
            .iter()
            .map(|l| LayerWeights {
                activation: l.activation,
                weights: l.weights.data().to_vec(),
                bias: l.bias.clone(),
            })
            .collect();
        Self { version: CHECKPOINT_VERSION, widths: m.widths(), layers }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.widths.len() != self.layers.len() + 1 {
            return Err(Error::shape(format!("{} widths for {} layers", self.widths.len(), self.layers.len())));
        }
        let mut dense = Vec::with_capacity(self.layers.len());
        for (w, l) in self.widths.windows(2).zip(&self.layers) {
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid("checkpoint holds non-finite parameters"));
            }
            dense.push(Dense {
                weights: Matrix::from_vec(w[0], w[1], l.weights.clone())?,
                bias: l.bias.clone(),
                activation: l.activation,
            });
        }
        Mlp::from_layers(dense)
    }
}
