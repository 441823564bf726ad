use crate::layer::Activation;
use crate::tensor::Tensor;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// `row_len` is the per-sample length; softmax normalizes within each sample.
pub(crate) fn forward_batch(kind: Activation, row_len: usize, input: &[f64], out: &mut [f64]) {
    match kind {
        Activation::Relu => {
            for (o, &x) in out.iter_mut().zip(input) {
                *o = if x > 0.0 { x } else { 0.0 };
            }
        }
        Activation::Sigmoid => {
            for (o, &x) in out.iter_mut().zip(input) {
                *o = sigmoid(x);
            }
        }
        Activation::Softmax => {
            for (o, x) in out.chunks_exact_mut(row_len).zip(input.chunks_exact(row_len)) {
                softmax_into(x, o);
            }
        }
    }
}

/// Gradient w.r.t. the activation input, given the cached input.
pub(crate) fn backward_batch(
    kind: Activation,
    row_len: usize,
    input: &[f64],
    upstream: &[f64],
    input_grad: &mut [f64],
) {
    match kind {
        Activation::Relu => {
            for ((g, &x), &u) in input_grad.iter_mut().zip(input).zip(upstream) {
                *g = if x > 0.0 { u } else { 0.0 };
            }
        }
        Activation::Sigmoid => {
            for ((g, &x), &u) in input_grad.iter_mut().zip(input).zip(upstream) {
                let s = sigmoid(x);
                *g = u * s * (1.0 - s);
            }
        }
        Activation::Softmax => {
            let mut p = vec![0.0; row_len];
            for ((g, x), u) in input_grad
                .chunks_exact_mut(row_len)
                .zip(input.chunks_exact(row_len))
                .zip(upstream.chunks_exact(row_len))
            {
                softmax_into(x, &mut p);
                let dot: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
                for ((gi, &pi), &ui) in g.iter_mut().zip(&p).zip(u) {
                    *gi = pi * (ui - dot);
                }
            }
        }
    }
}

pub fn activation_forward(kind: Activation, input: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(input.shape());
    forward_batch(kind, input.len(), input.data(), out.data_mut());
    out
}

pub fn activation_backward(kind: Activation, upstream: &Tensor, cached_input: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(cached_input.shape());
    backward_batch(
        kind,
        cached_input.len(),
        cached_input.data(),
        upstream.data(),
        g.data_mut(),
    );
    g
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    activation_forward(Activation::Relu, input)
}

pub fn relu_backward(upstream: &Tensor, cached_input: &Tensor) -> Tensor {
    activation_backward(Activation::Relu, upstream, cached_input)
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    activation_forward(Activation::Sigmoid, input)
}

pub fn sigmoid_backward(upstream: &Tensor, cached_input: &Tensor) -> Tensor {
    activation_backward(Activation::Sigmoid, upstream, cached_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_gradient() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::vector(vec![5.0, 5.0, 5.0]), &x);
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn sigmoid_extremes_are_finite() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softmax_sums_to_one_with_large_logits() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p[0] > 0.999_999);
    }
}
