//! Same-padded, stride-1 2-D convolution.
//!
//! Three GEMM formulations compute the same function: per-sample im2col (the
//! general path), shift-and-add for layers with very few output channels, and
//! a polyphase rewrite when the input is a 2x nearest-neighbour up-sampling.

use std::cell::RefCell;

use crate::error::{NnError, Result};
use crate::gemm::{gemm, Trans};
use crate::layer::ConvSpec;
use crate::tensor::{Shape, Tensor};

thread_local! {
    static COLUMNS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

fn with_columns<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    COLUMNS.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// Unfolds one `h x w x c` image into `(h*w) x (k*k*c)` patch rows.
fn im2col(spec: &ConvSpec, h: usize, w: usize, image: &[f64], col: &mut [f64]) {
    let k = spec.kernel;
    let c = spec.in_channels;
    let pad = k / 2;
    let row_len = k * k * c;
    for y in 0..h {
        for x in 0..w {
            let row = &mut col[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..k {
                let iy = y + ky;
                for kx in 0..k {
                    let ix = x + kx;
                    let dst = &mut row[(ky * k + kx) * c..(ky * k + kx + 1) * c];
                    if iy < pad || iy >= h + pad || ix < pad || ix >= w + pad {
                        dst.fill(0.0);
                    } else {
                        let src = ((iy - pad) * w + (ix - pad)) * c;
                        dst.copy_from_slice(&image[src..src + c]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back into an image.
fn col2im(spec: &ConvSpec, h: usize, w: usize, col: &[f64], image: &mut [f64]) {
    let k = spec.kernel;
    let c = spec.in_channels;
    let pad = k / 2;
    let row_len = k * k * c;
    image.fill(0.0);
    for y in 0..h {
        for x in 0..w {
            let row = &col[(y * w + x) * row_len..(y * w + x + 1) * row_len];
            for ky in 0..k {
                let iy = y + ky;
                if iy < pad || iy >= h + pad {
                    continue;
                }
                for kx in 0..k {
                    let ix = x + kx;
                    if ix < pad || ix >= w + pad {
                        continue;
                    }
                    let dst = ((iy - pad) * w + (ix - pad)) * c;
                    let src = &row[(ky * k + kx) * c..(ky * k + kx + 1) * c];
                    for (d, s) in image[dst..dst + c].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Forward pass over `count` images of `h x w x c_in`, writing `h x w x c_out` each.
pub(crate) fn forward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    out: &mut [f64],
) {
    if !is_thin(spec) {
        return im2col_forward_batch(spec, h, w, count, input, params, out);
    }
    let in_len = h * w * spec.in_channels;
    let out_len = h * w * spec.out_channels;
    for s in 0..count {
        thin_forward(
            spec,
            h,
            w,
            &input[s * in_len..(s + 1) * in_len],
            params,
            &mut out[s * out_len..(s + 1) * out_len],
        );
    }
}

/// Accumulates parameter gradients into `grad_params` and, when requested,
/// overwrites `input_grad` with the gradient w.r.t. the layer input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
    mut input_grad: Option<&mut [f64]>,
) {
    if !is_thin(spec) {
        return im2col_backward_batch(
            spec,
            h,
            w,
            count,
            input,
            params,
            upstream,
            grad_params,
            input_grad,
        );
    }
    let cout = spec.out_channels;
    let in_len = h * w * spec.in_channels;
    let out_len = h * w * cout;
    let (gw, gb) = grad_params.split_at_mut(spec.weight_count());
    for s in 0..count {
        let up = &upstream[s * out_len..(s + 1) * out_len];
        for px in up.chunks_exact(cout) {
            for (g, u) in gb.iter_mut().zip(px) {
                *g += u;
            }
        }
        thin_backward(
            spec,
            h,
            w,
            &input[s * in_len..(s + 1) * in_len],
            params,
            up,
            gw,
            input_grad
                .as_deref_mut()
                .map(|ig| &mut ig[s * in_len..(s + 1) * in_len]),
        );
    }
}

fn im2col_forward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    out: &mut [f64],
) {
    let pixels = h * w;
    let kdim = spec.kernel * spec.kernel * spec.in_channels;
    let (weights, bias) = params.split_at(spec.weight_count());
    let in_len = pixels * spec.in_channels;
    let out_len = pixels * spec.out_channels;
    with_columns(pixels * kdim, |col| {
        for s in 0..count {
            let dst = &mut out[s * out_len..(s + 1) * out_len];
            for px in dst.chunks_exact_mut(spec.out_channels) {
                px.copy_from_slice(bias);
            }
            im2col(spec, h, w, &input[s * in_len..(s + 1) * in_len], col);
            gemm(
                pixels,
                kdim,
                spec.out_channels,
                col,
                Trans::No,
                weights,
                Trans::No,
                1.0,
                dst,
            );
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn im2col_backward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
    mut input_grad: Option<&mut [f64]>,
) {
    let pixels = h * w;
    let kdim = spec.kernel * spec.kernel * spec.in_channels;
    let cout = spec.out_channels;
    let (weights, _) = params.split_at(spec.weight_count());
    let (gw, gb) = grad_params.split_at_mut(spec.weight_count());
    let in_len = pixels * spec.in_channels;
    let out_len = pixels * cout;
    with_columns(pixels * kdim, |col| {
        for s in 0..count {
            let up = &upstream[s * out_len..(s + 1) * out_len];
            for px in up.chunks_exact(cout) {
                for (g, u) in gb.iter_mut().zip(px) {
                    *g += u;
                }
            }
            im2col(spec, h, w, &input[s * in_len..(s + 1) * in_len], col);
            gemm(kdim, pixels, cout, col, Trans::Yes, up, Trans::No, 1.0, gw);
            if let Some(ig) = input_grad.as_deref_mut() {
                gemm(pixels, cout, kdim, up, Trans::No, weights, Trans::Yes, 0.0, col);
                col2im(spec, h, w, col, &mut ig[s * in_len..(s + 1) * in_len]);
            }
        }
    });
}

/// Outputs at or below this many channels use the shift-and-add kernel.
const THIN_OUTPUT: usize = 4;

fn is_thin(spec: &ConvSpec) -> bool {
    spec.out_channels <= THIN_OUTPUT && spec.kernel > 1
}

/// Output columns `x` for which input column `x + kx - pad` is in range.
fn valid_span(kx: usize, pad: usize, w: usize) -> std::ops::Range<usize> {
    pad.saturating_sub(kx)..(w + pad).saturating_sub(kx).min(w)
}

/// Thin-output forward: `Z = X · W_all` with `W_all` laid out
/// `[c_in][tap][c_out]`, then each output sums its taps' shifted rows of `Z`.
fn thin_forward(spec: &ConvSpec, h: usize, w: usize, image: &[f64], params: &[f64], out: &mut [f64]) {
    let k = spec.kernel;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let pad = k / 2;
    let (weights, bias) = params.split_at(spec.weight_count());
    let wall = taps_last(spec, weights);
    let n = k * k * cout;
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    with_columns(h * w * n, |z| {
        gemm(h * w, cin, n, image, Trans::No, &wall, Trans::No, 0.0, z);
        for ky in 0..k {
            for y in valid_span(ky, pad, h) {
                let iy = y + ky - pad;
                for kx in 0..k {
                    let t = (ky * k + kx) * cout;
                    for x in valid_span(kx, pad, w) {
                        let src = (iy * w + x + kx - pad) * n + t;
                        let dst = (y * w + x) * cout;
                        for o in 0..cout {
                            out[dst + o] += z[src + o];
                        }
                    }
                }
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn thin_backward(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    image: &[f64],
    params: &[f64],
    upstream: &[f64],
    grad_weights: &mut [f64],
    input_grad: Option<&mut [f64]>,
) {
    let k = spec.kernel;
    let taps = k * k;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let pad = k / 2;
    let n = taps * cout;
    // G[q][tap][c_out] = upstream at the output pixel that reads input q through tap
    with_columns(h * w * n, |g| {
        g.fill(0.0);
        for ky in 0..k {
            for y in valid_span(ky, pad, h) {
                let iy = y + ky - pad;
                for kx in 0..k {
                    let t = (ky * k + kx) * cout;
                    for x in valid_span(kx, pad, w) {
                        let dst = (iy * w + x + kx - pad) * n + t;
                        let src = (y * w + x) * cout;
                        g[dst..dst + cout].copy_from_slice(&upstream[src..src + cout]);
                    }
                }
            }
        }
        let mut dwall = vec![0.0; cin * n];
        gemm(cin, h * w, n, image, Trans::Yes, g, Trans::No, 0.0, &mut dwall);
        for t in 0..taps {
            for c in 0..cin {
                for o in 0..cout {
                    grad_weights[(t * cin + c) * cout + o] += dwall[c * n + t * cout + o];
                }
            }
        }
        if let Some(ig) = input_grad {
            let wall = taps_last(spec, &params[..spec.weight_count()]);
            gemm(h * w, n, cin, g, Trans::No, &wall, Trans::Yes, 0.0, ig);
        }
    });
}

/// `[tap][c_in][c_out]` -> `[c_in][tap][c_out]`.
fn taps_last(spec: &ConvSpec, weights: &[f64]) -> Vec<f64> {
    let taps = spec.kernel * spec.kernel;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mut wall = vec![0.0; weights.len()];
    for t in 0..taps {
        for c in 0..cin {
            let src = &weights[(t * cin + c) * cout..(t * cin + c + 1) * cout];
            let dst = (c * taps + t) * cout;
            wall[dst..dst + cout].copy_from_slice(src);
        }
    }
    wall
}

/// Geometry of a convolution applied to a 2x nearest-neighbour up-sampled
/// image, rewritten as one convolution over the low-resolution image with a
/// separate effective kernel per output phase `(row % 2, col % 2)`.
struct Polyphase {
    /// Half-width of the effective kernel.
    radius: usize,
    /// Effective low-res kernel (same padding) used for the shared im2col.
    low: ConvSpec,
}

impl Polyphase {
    fn new(spec: &ConvSpec) -> Self {
        let pad = spec.kernel / 2;
        let radius = pad.div_ceil(2);
        Polyphase {
            radius,
            low: ConvSpec::new(2 * radius + 1, spec.in_channels, 4 * spec.out_channels),
        }
    }

    /// Effective-kernel row index for kernel row `ky` at phase `a`.
    fn tap(&self, spec: &ConvSpec, phase: usize, ky: usize) -> usize {
        let shifted = (phase + ky) as isize - (spec.kernel / 2) as isize;
        (shifted.div_euclid(2) + self.radius as isize) as usize
    }

    /// Weights `[ey][ex][c_in][phase][c_out]` summing the taps that land on
    /// the same low-res pixel.
    fn weights(&self, spec: &ConvSpec, weights: &[f64]) -> Vec<f64> {
        let k = spec.kernel;
        let ke = self.low.kernel;
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let n = 4 * cout;
        let mut eff = vec![0.0; ke * ke * cin * n];
        for a in 0..2 {
            for b in 0..2 {
                let phase = 2 * a + b;
                for ky in 0..k {
                    let ey = self.tap(spec, a, ky);
                    for kx in 0..k {
                        let ex = self.tap(spec, b, kx);
                        for c in 0..cin {
                            let src = ((ky * k + kx) * cin + c) * cout;
                            let dst = ((ey * ke + ex) * cin + c) * n + phase * cout;
                            for o in 0..cout {
                                eff[dst + o] += weights[src + o];
                            }
                        }
                    }
                }
            }
        }
        eff
    }

    /// Adjoint of [`Polyphase::weights`], accumulated into `grad_weights`.
    fn fold_gradient(&self, spec: &ConvSpec, eff_grad: &[f64], grad_weights: &mut [f64]) {
        let k = spec.kernel;
        let ke = self.low.kernel;
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let n = 4 * cout;
        for a in 0..2 {
            for b in 0..2 {
                let phase = 2 * a + b;
                for ky in 0..k {
                    let ey = self.tap(spec, a, ky);
                    for kx in 0..k {
                        let ex = self.tap(spec, b, kx);
                        for c in 0..cin {
                            let dst = ((ky * k + kx) * cin + c) * cout;
                            let src = ((ey * ke + ex) * cin + c) * n + phase * cout;
                            for o in 0..cout {
                                grad_weights[dst + o] += eff_grad[src + o];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `conv(upsample2x2(x))` for `count` low-res `h x w x c_in` images; output is
/// `2h x 2w x c_out` each. Equal to running the two layers separately.
pub(crate) fn upsample_conv_forward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    out: &mut [f64],
) {
    let poly = Polyphase::new(spec);
    let (weights, bias) = params.split_at(spec.weight_count());
    let eff = poly.weights(spec, weights);
    let cout = spec.out_channels;
    let n = 4 * cout;
    let kdim = poly.low.kernel * poly.low.kernel * spec.in_channels;
    let pixels = h * w;
    let in_len = pixels * spec.in_channels;
    let out_len = 4 * pixels * cout;
    let mut z = vec![0.0; pixels * n];
    with_columns(pixels * kdim, |col| {
        for s in 0..count {
            im2col(&poly.low, h, w, &input[s * in_len..(s + 1) * in_len], col);
            gemm(pixels, kdim, n, col, Trans::No, &eff, Trans::No, 0.0, &mut z);
            let dst = &mut out[s * out_len..(s + 1) * out_len];
            for i in 0..h {
                for j in 0..w {
                    let zrow = &z[(i * w + j) * n..(i * w + j + 1) * n];
                    for a in 0..2 {
                        for b in 0..2 {
                            let o = ((2 * i + a) * 2 * w + 2 * j + b) * cout;
                            let zp = &zrow[(2 * a + b) * cout..(2 * a + b + 1) * cout];
                            for ((d, zv), bv) in dst[o..o + cout].iter_mut().zip(zp).zip(bias) {
                                *d = zv + bv;
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Backward pass of the fused up-sample + convolution. `input_grad`, when
/// given, receives the gradient w.r.t. the low-res input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn upsample_conv_backward_batch(
    spec: &ConvSpec,
    h: usize,
    w: usize,
    count: usize,
    input: &[f64],
    params: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
    mut input_grad: Option<&mut [f64]>,
) {
    let poly = Polyphase::new(spec);
    let (weights, _) = params.split_at(spec.weight_count());
    let eff = input_grad.is_some().then(|| poly.weights(spec, weights));
    let (gw, gb) = grad_params.split_at_mut(spec.weight_count());
    let cout = spec.out_channels;
    let n = 4 * cout;
    let kdim = poly.low.kernel * poly.low.kernel * spec.in_channels;
    let pixels = h * w;
    let in_len = pixels * spec.in_channels;
    let out_len = 4 * pixels * cout;
    let mut dz = vec![0.0; pixels * n];
    let mut eff_grad = vec![0.0; kdim * n];
    with_columns(pixels * kdim, |col| {
        for s in 0..count {
            let up = &upstream[s * out_len..(s + 1) * out_len];
            for px in up.chunks_exact(cout) {
                for (g, u) in gb.iter_mut().zip(px) {
                    *g += u;
                }
            }
            for i in 0..h {
                for j in 0..w {
                    for a in 0..2 {
                        for b in 0..2 {
                            let o = ((2 * i + a) * 2 * w + 2 * j + b) * cout;
                            let d = (i * w + j) * n + (2 * a + b) * cout;
                            dz[d..d + cout].copy_from_slice(&up[o..o + cout]);
                        }
                    }
                }
            }
            im2col(&poly.low, h, w, &input[s * in_len..(s + 1) * in_len], col);
            gemm(kdim, pixels, n, col, Trans::Yes, &dz, Trans::No, 1.0, &mut eff_grad);
            if let (Some(ig), Some(eff)) = (input_grad.as_deref_mut(), eff.as_ref()) {
                gemm(pixels, n, kdim, &dz, Trans::No, eff, Trans::Yes, 0.0, col);
                col2im(&poly.low, h, w, col, &mut ig[s * in_len..(s + 1) * in_len]);
            }
        }
    });
    poly.fold_gradient(spec, &eff_grad, gw);
}

fn check_input(input: Shape, spec: &ConvSpec) -> Result<(usize, usize)> {
    match input {
        Shape::Image {
            height,
            width,
            channels,
        } if channels == spec.in_channels => Ok((height, width)),
        other => Err(NnError::config(
            "conv2d",
            format!(
                "expected an image with {} channels, got {other}",
                spec.in_channels
            ),
        )),
    }
}

fn check_params(params: &[f64], spec: &ConvSpec) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(NnError::LengthMismatch {
            expected: spec.param_count(),
            actual: params.len(),
        });
    }
    Ok(())
}

/// Convolves one image; output has the input's spatial size and `c_out` channels.
pub fn conv2d_forward(input: &Tensor, params: &[f64], spec: &ConvSpec) -> Result<Tensor> {
    let (h, w) = check_input(input.shape(), spec)?;
    check_params(params, spec)?;
    let shape = Shape::image(h, w, spec.out_channels);
    let mut out = vec![0.0; shape.len()];
    forward_batch(spec, h, w, 1, input.data(), params, &mut out);
    Tensor::new(shape, out)
}

/// Returns `(input_grad, param_grad)` for one image.
pub fn conv2d_backward(
    upstream: &Tensor,
    cached_input: &Tensor,
    params: &[f64],
    spec: &ConvSpec,
) -> Result<(Tensor, Vec<f64>)> {
    let (h, w) = check_input(cached_input.shape(), spec)?;
    check_params(params, spec)?;
    let expected = Shape::image(h, w, spec.out_channels);
    if upstream.shape() != expected {
        return Err(NnError::config(
            "conv2d",
            format!("upstream gradient {} does not match output {expected}", upstream.shape()),
        ));
    }
    let mut grad_params = vec![0.0; spec.param_count()];
    let mut input_grad = vec![0.0; cached_input.len()];
    backward_batch(
        spec,
        h,
        w,
        1,
        cached_input.data(),
        params,
        upstream.data(),
        &mut grad_params,
        Some(&mut input_grad),
    );
    Ok((Tensor::new(cached_input.shape(), input_grad)?, grad_params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_linear_case() {
        let spec = ConvSpec::new(1, 1, 1);
        let x = Tensor::new(Shape::image(1, 1, 1), vec![2.0]).unwrap();
        let y = conv2d_forward(&x, &[3.0, 1.0], &spec).unwrap();
        assert_eq!(y.data(), &[7.0]);

        let up = Tensor::new(Shape::image(1, 1, 1), vec![1.0]).unwrap();
        let (gx, gp) = conv2d_backward(&up, &x, &[3.0, 1.0], &spec).unwrap();
        assert_eq!(gp, vec![2.0, 1.0]);
        assert_eq!(gx.data(), &[3.0]);
    }

    #[test]
    fn same_padding_overlap_counts() {
        let spec = ConvSpec::new(3, 1, 1);
        let x = Tensor::filled(Shape::image(3, 3, 1), 1.0);
        let mut params = vec![1.0; 9];
        params.push(0.0);
        let y = conv2d_forward(&x, &params, &spec).unwrap();
        assert_eq!(y.at(1, 1, 0), 9.0);
        for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.at(r, c, 0), 4.0);
        }
        assert_eq!(y.at(0, 1, 0), 6.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = ConvSpec::new(3, 2, 3);
        let x = Tensor::new(
            Shape::image(4, 4, 2),
            (0..32).map(|i| i as f64 * 0.1 - 1.0).collect(),
        )
        .unwrap();
        let params: Vec<f64> = (0..spec.param_count()).map(|i| (i as f64).sin()).collect();
        let up = Tensor::zeros(Shape::image(4, 4, 3));
        let (gx, gp) = conv2d_backward(&up, &x, &params, &spec).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gp.iter().all(|&v| v == 0.0));
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 7919) % 101) as f64 * scale - 0.5).collect()
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn thin_kernel_matches_im2col() {
        for (k, cin, cout, h, w) in [(5, 32, 3, 6, 7), (3, 4, 1, 5, 5), (5, 2, 4, 3, 2)] {
            let spec = ConvSpec::new(k, cin, cout);
            assert!(is_thin(&spec));
            let count = 2;
            let x = ramp(count * h * w * cin, 0.01);
            let params = ramp(spec.param_count(), 0.013);
            let up = ramp(count * h * w * cout, 0.017);

            let mut y_thin = vec![0.0; count * h * w * cout];
            let mut y_ref = y_thin.clone();
            forward_batch(&spec, h, w, count, &x, &params, &mut y_thin);
            im2col_forward_batch(&spec, h, w, count, &x, &params, &mut y_ref);
            close(&y_thin, &y_ref);

            let mut gp_thin = vec![0.0; params.len()];
            let mut gp_ref = gp_thin.clone();
            let mut gx_thin = vec![0.0; x.len()];
            let mut gx_ref = gx_thin.clone();
            backward_batch(&spec, h, w, count, &x, &params, &up, &mut gp_thin, Some(&mut gx_thin));
            im2col_backward_batch(&spec, h, w, count, &x, &params, &up, &mut gp_ref, Some(&mut gx_ref));
            close(&gp_thin, &gp_ref);
            close(&gx_thin, &gx_ref);
        }
    }

    #[test]
    fn fused_upsample_matches_separate_layers() {
        for (k, cin, cout, h, w) in [(5, 8, 16, 5, 5), (3, 3, 5, 4, 3), (7, 2, 3, 3, 4), (1, 2, 2, 2, 2)] {
            let spec = ConvSpec::new(k, cin, cout);
            let count = 3;
            let x = ramp(count * h * w * cin, 0.01);
            let params = ramp(spec.param_count(), 0.013);
            let up = ramp(count * 4 * h * w * cout, 0.017);

            let mut big = vec![0.0; count * 4 * h * w * cin];
            crate::pool::upsample_forward_batch(h, w, cin, count, &x, &mut big);
            let mut y_ref = vec![0.0; count * 4 * h * w * cout];
            forward_batch(&spec, 2 * h, 2 * w, count, &big, &params, &mut y_ref);
            let mut y = vec![0.0; y_ref.len()];
            upsample_conv_forward_batch(&spec, h, w, count, &x, &params, &mut y);
            close(&y, &y_ref);

            let mut gp_ref = vec![0.0; params.len()];
            let mut gbig = vec![0.0; big.len()];
            backward_batch(&spec, 2 * h, 2 * w, count, &big, &params, &up, &mut gp_ref, Some(&mut gbig));
            let mut gx_ref = vec![0.0; x.len()];
            crate::pool::upsample_backward_batch(h, w, cin, count, &gbig, &mut gx_ref);

            let mut gp = vec![0.0; params.len()];
            let mut gx = vec![0.0; x.len()];
            upsample_conv_backward_batch(&spec, h, w, count, &x, &params, &up, &mut gp, Some(&mut gx));
            close(&gp, &gp_ref);
            close(&gx, &gx_ref);
        }
    }

    #[test]
    fn channel_mismatch_is_config_error() {
        let spec = ConvSpec::new(3, 2, 3);
        let x = Tensor::zeros(Shape::image(4, 4, 1));
        let params = vec![0.0; spec.param_count()];
        assert!(matches!(
            conv2d_forward(&x, &params, &spec),
            Err(NnError::Config { .. })
        ));
    }
}
