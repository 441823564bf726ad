use crate::activation::softmax_into;
use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Cross-entropy of `softmax(logits)` against `label`, and its gradient
/// w.r.t. the logits (`softmax − onehot`).
pub fn softmax_crossentropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(NnError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let mut grad = vec![0.0; logits.len()];
    let loss = softmax_crossentropy_into(logits, label, &mut grad);
    Ok((loss, grad))
}

/// Unchecked row kernel; `grad` is overwritten.
pub(crate) fn softmax_crossentropy_into(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let loss = sum_exp.ln() - (logits[label] - max);
    softmax_into(logits, grad);
    grad[label] -= 1.0;
    loss
}

/// Batch cross-entropy over rows of `logits`; returns the summed loss and
/// writes per-row gradients scaled by `scale` into `grad`.
pub fn softmax_crossentropy_batch(
    logits: &[f64],
    classes: usize,
    labels: &[usize],
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if logits.len() != classes * labels.len() {
        return Err(NnError::LengthMismatch {
            expected: classes * labels.len(),
            actual: logits.len(),
        });
    }
    let mut total = 0.0;
    for ((row, g), &label) in logits
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(labels)
    {
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        total += softmax_crossentropy_into(row, label, g);
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok(total)
}

/// Squared L2 reconstruction error summed over every element, with gradient
/// `2 (recon − target)` w.r.t. the reconstruction.
pub fn mse_loss(reconstruction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if reconstruction.shape() != target.shape() {
        return Err(NnError::config(
            "mse_loss",
            format!(
                "reconstruction {} vs target {}",
                reconstruction.shape(),
                target.shape()
            ),
        ));
    }
    let mut grad = Tensor::zeros(target.shape());
    let loss = sum_squared_error(reconstruction.data(), target.data(), 1.0, grad.data_mut());
    Ok((loss, grad))
}

/// Returns `Σ (r − t)²` and writes `scale · 2 (r − t)` into `grad`.
pub fn sum_squared_error(recon: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((g, &r), &t) in grad.iter_mut().zip(recon).zip(target) {
        let d = r - t;
        total += d * d;
        *g = scale * 2.0 * d;
    }
    total
}
