use alloc::format;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};
use crate::math::{exp, ln};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Mean squared error over every output element.
    Mse,
    /// Softmax cross-entropy over each output row against one-hot targets:
    /// the discriminator's factual-identification loss.
    Adversarial,
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::shape(format!(
            "predictions {}x{} vs targets {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    same_shape(pred, target)?;
    let n = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let r = p - t;
        loss += r * r;
        *g = 2.0 * r / n;
    }
    Ok((loss / n, grad))
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean over rows of `−Σ_k target_k · log softmax(logits)_k`, and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    same_shape(logits, target)?;
    let b = logits.rows().max(1) as f64;
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let lrow = logits.row(r);
        let max = lrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + ln(lrow.iter().map(|v| exp(v - max)).sum::<f64>());
        for (k, (&t, &p)) in target.row(r).iter().zip(probs.row(r)).enumerate() {
            loss -= t * (lrow[k] - lse);
            grad.set(r, k, (p - t) / b);
        }
    }
    Ok((loss / b, grad))
}

/// Loss of `m` on `(batch, targets)` and its exact parameter gradients.
pub fn loss_and_grad(m: &Mlp, batch: &Matrix, targets: &Matrix, loss: Loss) -> Result<(f64, Gradients)> {
    let tape = m.forward_tape(batch)?;
    let (value, d_out) = match loss {
        Loss::Mse => mse(tape.output(), targets)?,
        Loss::Adversarial => softmax_cross_entropy(tape.output(), targets)?,
    };
    let (grads, _) = m.backward(&tape, &d_out)?;
    Ok((value, grads))
}
