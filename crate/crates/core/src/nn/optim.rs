use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First-order optimizer state over a flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, m: &Mlp) -> Self {
        let n = m.param_count();
        let second = match kind {
            OptimizerKind::Adam { .. } => alloc::vec![0.0; n],
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
        };
        Self { kind, lr, first: alloc::vec![0.0; n], second, steps: 0 }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, m: &mut Mlp, g: &Gradients) {
        self.steps += 1;
        let mut off = 0;
        for (layer, grad) in m.layers_mut().iter_mut().zip(&g.layers) {
            let nw = grad.weights.data().len();
            self.update(off, layer.weights.data_mut(), grad.weights.data());
            off += nw;
            let nb = grad.bias.len();
            self.update(off, &mut layer.bias, &grad.bias);
            off += nb;
        }
    }

    fn update(&mut self, off: usize, params: &mut [f64], grads: &[f64]) {
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let v = &mut self.first[off + i];
                    *v = momentum * *v - self.lr * g;
                    *p += *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - libm::pow(beta1, self.steps as f64);
                let c2 = 1.0 - libm::pow(beta2, self.steps as f64);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m1 = &mut self.first[off + i];
                    *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                    let m2 = &mut self.second[off + i];
                    *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                    *p -= self.lr * (*m1 / c1) / (sqrt(*m2 / c2) + eps);
                }
            }
        }
    }
}
