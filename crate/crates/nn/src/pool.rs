//! 2x2 max-pooling and 2x2 nearest-neighbour up-sampling.

use crate::error::{NnError, Result};
use crate::tensor::{Shape, Tensor};

/// Pools `count` images; `argmax` receives the flat input index of each winner.
/// Ties go to the first maximum in row-major scan order of the window.
pub(crate) fn maxpool_forward_batch(
    h: usize,
    w: usize,
    c: usize,
    count: usize,
    input: &[f64],
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let (oh, ow) = (h / 2, w / 2);
    let in_len = h * w * c;
    let out_len = oh * ow * c;
    for s in 0..count {
        let base = s * in_len;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = base + ((2 * oy) * w + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                    let o = s * out_len + (oy * ow + ox) * c + ch;
                    out[o] = input[best];
                    argmax[o] = best;
                }
            }
        }
    }
}

pub(crate) fn maxpool_backward_batch(argmax: &[usize], upstream: &[f64], input_grad: &mut [f64]) {
    input_grad.fill(0.0);
    for (&idx, &g) in argmax.iter().zip(upstream) {
        input_grad[idx] += g;
    }
}

pub(crate) fn upsample_forward_batch(
    h: usize,
    w: usize,
    c: usize,
    count: usize,
    input: &[f64],
    out: &mut [f64],
) {
    let ow = 2 * w;
    let in_len = h * w * c;
    let out_len = 4 * in_len;
    for s in 0..count {
        let src = &input[s * in_len..(s + 1) * in_len];
        let dst = &mut out[s * out_len..(s + 1) * out_len];
        for y in 0..h {
            for x in 0..w {
                let px = &src[(y * w + x) * c..(y * w + x + 1) * c];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let o = ((2 * y + dy) * ow + 2 * x + dx) * c;
                    dst[o..o + c].copy_from_slice(px);
                }
            }
        }
    }
}

pub(crate) fn upsample_backward_batch(
    h: usize,
    w: usize,
    c: usize,
    count: usize,
    upstream: &[f64],
    input_grad: &mut [f64],
) {
    let ow = 2 * w;
    let in_len = h * w * c;
    let out_len = 4 * in_len;
    for s in 0..count {
        let up = &upstream[s * out_len..(s + 1) * out_len];
        let dst = &mut input_grad[s * in_len..(s + 1) * in_len];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        acc += up[((2 * y + dy) * ow + 2 * x + dx) * c + ch];
                    }
                    dst[(y * w + x) * c + ch] = acc;
                }
            }
        }
    }
}

fn image_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        Shape::Image {
            height,
            width,
            channels,
        } => Ok((height, width, channels)),
        other => Err(NnError::config(what, format!("expected an image, got {other}"))),
    }
}

/// Returns the pooled image and the flat argmax index per output cell.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (h, w, c) = image_dims(input, "maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::config(
            "maxpool2x2",
            format!("odd spatial size {h}x{w}"),
        ));
    }
    let shape = Shape::image(h / 2, w / 2, c);
    let mut out = vec![0.0; shape.len()];
    let mut argmax = vec![0; shape.len()];
    maxpool_forward_batch(h, w, c, 1, input.data(), &mut out, &mut argmax);
    Ok((Tensor::new(shape, out)?, argmax))
}

pub fn maxpool2x2_backward(upstream: &Tensor, cached_input: &Tensor) -> Result<Tensor> {
    let (_, argmax) = maxpool2x2_forward(cached_input)?;
    if upstream.len() != argmax.len() {
        return Err(NnError::LengthMismatch {
            expected: argmax.len(),
            actual: upstream.len(),
        });
    }
    let mut grad = vec![0.0; cached_input.len()];
    maxpool_backward_batch(&argmax, upstream.data(), &mut grad);
    Tensor::new(cached_input.shape(), grad)
}

pub fn upsample2x2_forward(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = image_dims(input, "upsample2x2")?;
    let shape = Shape::image(2 * h, 2 * w, c);
    let mut out = vec![0.0; shape.len()];
    upsample_forward_batch(h, w, c, 1, input.data(), &mut out);
    Tensor::new(shape, out)
}

pub fn upsample2x2_backward(upstream: &Tensor) -> Result<Tensor> {
    let (h, w, c) = image_dims(upstream, "upsample2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::config(
            "upsample2x2",
            format!("upstream gradient has odd size {h}x{w}"),
        ));
    }
    let shape = Shape::image(h / 2, w / 2, c);
    let mut grad = vec![0.0; shape.len()];
    upsample_backward_batch(h / 2, w / 2, c, 1, upstream.data(), &mut grad);
    Tensor::new(shape, grad)
}
