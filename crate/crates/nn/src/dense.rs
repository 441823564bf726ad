//! Fully connected layer: `y = x · W + b` with `W` stored `[input][output]`.

use crate::error::{NnError, Result};
use crate::gemm::{gemm, Trans};
use crate::layer::DenseSpec;
use crate::tensor::Tensor;

pub(crate) fn forward_batch(
    spec: &DenseSpec,
    count: usize,
    input: &[f64],
    params: &[f64],
    out: &mut [f64],
) {
    let (weights, bias) = params.split_at(spec.weight_count());
    for row in out.chunks_exact_mut(spec.outputs).take(count) {
        row.copy_from_slice(bias);
    }
    gemm(
        count,
        spec.inputs,
        spec.outputs,
        input,
        Trans::No,
        weights,
        Trans::No,
        1.0,
        out,
    );
}

pub(crate) fn backward_batch(
    spec: &DenseSpec,
    count: usize,
    input: &[f64],
    params: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
    input_grad: Option<&mut [f64]>,
) {
    let (weights, _) = params.split_at(spec.weight_count());
    let (gw, gb) = grad_params.split_at_mut(spec.weight_count());
    gemm(
        spec.inputs,
        count,
        spec.outputs,
        input,
        Trans::Yes,
        upstream,
        Trans::No,
        1.0,
        gw,
    );
    for row in upstream.chunks_exact(spec.outputs).take(count) {
        for (g, u) in gb.iter_mut().zip(row) {
            *g += u;
        }
    }
    if let Some(ig) = input_grad {
        gemm(
            count,
            spec.outputs,
            spec.inputs,
            upstream,
            Trans::No,
            weights,
            Trans::Yes,
            0.0,
            ig,
        );
    }
}

fn check(spec: &DenseSpec, input: &Tensor, params: &[f64]) -> Result<()> {
    if input.len() != spec.inputs {
        return Err(NnError::config(
            "dense",
            format!("expected {} inputs, got {}", spec.inputs, input.len()),
        ));
    }
    if params.len() != spec.param_count() {
        return Err(NnError::LengthMismatch {
            expected: spec.param_count(),
            actual: params.len(),
        });
    }
    Ok(())
}

/// Any input shape is accepted as long as its length matches; it is read flat.
pub fn dense_forward(input: &Tensor, params: &[f64], spec: &DenseSpec) -> Result<Tensor> {
    check(spec, input, params)?;
    let mut out = vec![0.0; spec.outputs];
    forward_batch(spec, 1, input.data(), params, &mut out);
    Ok(Tensor::vector(out))
}

/// Returns `(input_grad, param_grad)`; the input gradient keeps the input's shape.
pub fn dense_backward(
    upstream: &Tensor,
    cached_input: &Tensor,
    params: &[f64],
    spec: &DenseSpec,
) -> Result<(Tensor, Vec<f64>)> {
    check(spec, cached_input, params)?;
    if upstream.len() != spec.outputs {
        return Err(NnError::LengthMismatch {
            expected: spec.outputs,
            actual: upstream.len(),
        });
    }
    let mut gp = vec![0.0; spec.param_count()];
    let mut gx = vec![0.0; spec.inputs];
    backward_batch(
        spec,
        1,
        cached_input.data(),
        params,
        upstream.data(),
        &mut gp,
        Some(&mut gx),
    );
    Ok((Tensor::new(cached_input.shape(), gx)?, gp))
}
