use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};
use crate::math::{sigmoid, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
    }

    /// Multiplies `grad` by the activation derivative, written in terms of
    /// the activation output `y`.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, y)| {
                if *y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => grad.iter_mut().zip(y).for_each(|(g, y)| *g *= y * (1.0 - y)),
        }
    }
}

/// Fully connected layer `y = act(x·W + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(x, false, &self.weights, false, &mut out, 1.0);
        self.activation.apply(out.data_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
}

impl Gradients {
    pub fn zeros_like(m: &Mlp) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| DenseGrad { weights: Matrix::zeros(l.in_dim(), l.out_dim()), bias: alloc::vec![0.0; l.out_dim()] })
            .collect();
        Self { layers }
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(l.weights.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.data_mut().iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.flatten().iter().map(|v| v * v).sum())
    }
}

/// Intermediate activations kept by [`Mlp::forward_tape`] for backprop.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Matrix,
    outputs: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().unwrap_or(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Randomly initialized network with layer widths `widths` (input first).
    ///
    /// Weights are uniform on `±sqrt(6/fan_in)` for ReLU layers and
    /// `±sqrt(3/fan_in)` otherwise; biases start at zero.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("invalid layer widths {widths:?}")));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let activation = if i == last { output } else { hidden };
                let gain = if activation == Activation::Relu { 6.0 } else { 3.0 };
                let bound = sqrt(gain / w[0] as f64);
                let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect();
                Dense {
                    weights: Matrix::from_vec(w[0], w[1], data).expect("sized above"),
                    bias: alloc::vec![0.0; w[1]],
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!("layer {i}: bias length {} != width {}", l.bias.len(), l.out_dim())));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(format!("layer {i} expects {} inputs", l.in_dim())));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        core::iter::once(self.input_dim()).chain(self.layers.iter().map(Dense::out_dim)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim() * l.out_dim() + l.out_dim()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.weights.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!("{} params for a {}-param network", params.len(), self.param_count())));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Maps a `b × input_dim` batch to `b × output_dim`.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut h = self.layers[0].forward(batch);
        for l in &self.layers[1..] {
            h = l.forward(&h);
        }
        Ok(h)
    }

    pub fn forward_tape(&self, batch: &Matrix) -> Result<Tape> {
        self.check_input(batch)?;
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let next = l.forward(outputs.last().unwrap_or(batch));
            outputs.push(next);
        }
        Ok(Tape { input: batch.clone(), outputs })
    }

    /// Reverse pass. `d_out` is the loss gradient with respect to the
    /// network output recorded in `tape`; returns parameter gradients and
    /// the gradient with respect to the input batch.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix) -> Result<(Gradients, Matrix)> {
        let out = tape.output();
        if (d_out.rows(), d_out.cols()) != (out.rows(), out.cols()) {
            return Err(Error::shape(format!(
                "output gradient is {}x{}, output is {}x{}",
                d_out.rows(),
                d_out.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grads: Vec<DenseGrad> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            l.activation.backprop(tape.outputs[i].data(), delta.data_mut());
            let x = if i == 0 { &tape.input } else { &tape.outputs[i - 1] };
            let mut dw = Matrix::zeros(l.in_dim(), l.out_dim());
            gemm(x, true, &delta, false, &mut dw, 0.0);
            let mut db = alloc::vec![0.0; l.out_dim()];
            for r in 0..delta.rows() {
                db.iter_mut().zip(delta.row(r)).for_each(|(b, d)| *b += d);
            }
            let mut dx = Matrix::zeros(delta.rows(), l.in_dim());
            gemm(&delta, false, &l.weights, true, &mut dx, 0.0);
            grads.push(DenseGrad { weights: dw, bias: db });
            delta = dx;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn zero_network_outputs_zero() {
        let mut m =
            Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut stream(1, Purpose::Training, 0)).unwrap();
        let n = m.param_count();
        m.set_params(&alloc::vec![0.0; n]).unwrap();
        let x = Matrix::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.5, 0.5]]).unwrap();
        assert!(m.forward(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let m = Mlp::from_layers(alloc::vec![Dense {
            weights: Matrix::identity(3),
            bias: alloc::vec![0.0; 3],
            activation: Activation::Identity
        }])
        .unwrap();
        let x = Matrix::from_rows(&[&[1.0, -2.0, 3.5], &[0.0, 7.0, -1.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn duplicated_rows_give_identical_outputs() {
        let m = Mlp::new(&[2, 8, 8, 1], Activation::Relu, Activation::Sigmoid, &mut stream(2, Purpose::Training, 0))
            .unwrap();
        let x = Matrix::from_rows(&[&[0.3, -0.7], &[0.3, -0.7]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert_eq!(y.row(0), y.row(1));
        assert!(y.row(0)[0] > 0.0 && y.row(0)[0] < 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m =
            Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut stream(3, Purpose::Training, 0)).unwrap();
        let x = Matrix::zeros(4, 3);
        assert!(matches!(m.forward(&x), Err(Error::Shape(_))));
        let bad = alloc::vec![
            Dense { weights: Matrix::zeros(2, 3), bias: alloc::vec![0.0; 3], activation: Activation::Relu },
            Dense { weights: Matrix::zeros(4, 1), bias: alloc::vec![0.0; 1], activation: Activation::Identity },
        ];
        assert!(Mlp::from_layers(bad).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut m =
            Mlp::new(&[4, 5, 3], Activation::Relu, Activation::Identity, &mut stream(4, Purpose::Training, 0)).unwrap();
        let p = m.params();
        assert_eq!(p.len(), 4 * 5 + 5 + 5 * 3 + 3);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        m.set_params(&shifted).unwrap();
        assert_eq!(m.params(), shifted);
        assert_eq!(m.widths(), alloc::vec![4, 5, 3]);
    }
}
