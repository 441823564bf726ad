//! A fixed stack of layers sharing one flat parameter slice.

use std::ops::Range;

use crate::activation;
use crate::conv;
use crate::dense;
use crate::error::{NnError, Result};
use crate::layer::LayerSpec;
use crate::pool;
use crate::tensor::{Batch, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    name: String,
    layers: Vec<LayerSpec>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    param_count: usize,
}

/// Per-layer values kept from a forward pass for the backward pass. The input
/// of a convolution fused with a preceding up-sampling is not kept.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Option<Batch>>,
    argmax: Vec<Option<Vec<usize>>>,
}

impl Sequential {
    pub fn new(name: impl Into<String>, input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let name = name.into();
        let mut shapes = vec![input];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(&format!("{name}.{i}"), shapes[i])?;
            shapes.push(next);
            offsets.push(total);
            total += layer.param_count();
        }
        Ok(Sequential {
            name,
            layers,
            shapes,
            offsets,
            param_count: total,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("at least the input shape")
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn layer_name(&self, i: usize) -> String {
        format!("{}.{i}", self.name)
    }

    /// Parameter range of layer `i` within this stack's slice.
    pub fn layer_params(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.layers[i].param_count()
    }

    /// `(segment name, layer index)` for every parameterized layer.
    pub fn param_segments(&self) -> Vec<(String, usize)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.param_count() > 0)
            .map(|(i, _)| (self.layer_name(i), i))
            .collect()
    }

    fn check(&self, params: &[f64], input: &Batch) -> Result<()> {
        if params.len() != self.param_count {
            return Err(NnError::LengthMismatch {
                expected: self.param_count,
                actual: params.len(),
            });
        }
        if input.shape().len() != self.shapes[0].len() {
            return Err(NnError::config(
                &self.name,
                format!("expected input {}, got {}", self.shapes[0], input.shape()),
            ));
        }
        Ok(())
    }

    /// An up-sampling directly followed by a convolution runs as one step.
    fn fused(&self, i: usize) -> bool {
        matches!(self.layers[i], LayerSpec::Upsample2x2)
            && matches!(self.layers.get(i + 1), Some(LayerSpec::Conv(_)))
    }

    fn run_fused(&self, i: usize, params: &[f64], x: &Batch) -> Batch {
        let LayerSpec::Conv(spec) = &self.layers[i + 1] else {
            unreachable!("fused pair ends in a convolution")
        };
        let (h, w, _) = self.shapes[i].dims();
        let mut out = Batch::zeros(self.shapes[i + 2], x.count());
        let p = &params[self.layer_params(i + 1)];
        conv::upsample_conv_forward_batch(spec, h, w, x.count(), x.data(), p, out.data_mut());
        out
    }

    fn run_layer(&self, i: usize, params: &[f64], x: &Batch) -> (Batch, Option<Vec<usize>>) {
        let n = x.count();
        let in_shape = self.shapes[i];
        let out_shape = self.shapes[i + 1];
        let (h, w, c) = in_shape.dims();
        let p = &params[self.layer_params(i)];
        let mut out = Batch::zeros(out_shape, n);
        let mut argmax = None;
        match &self.layers[i] {
            LayerSpec::Conv(spec) => {
                conv::forward_batch(spec, h, w, n, x.data(), p, out.data_mut());
            }
            LayerSpec::MaxPool2x2 => {
                let mut idx = vec![0; out.data().len()];
                pool::maxpool_forward_batch(h, w, c, n, x.data(), out.data_mut(), &mut idx);
                argmax = Some(idx);
            }
            LayerSpec::Upsample2x2 => {
                pool::upsample_forward_batch(h, w, c, n, x.data(), out.data_mut());
            }
            LayerSpec::Dense(spec) => {
                dense::forward_batch(spec, n, x.data(), p, out.data_mut());
            }
            LayerSpec::Activation(kind) => {
                activation::forward_batch(*kind, in_shape.len(), x.data(), out.data_mut());
            }
        }
        (out, argmax)
    }

    /// Inference-only forward pass.
    pub fn forward(&self, params: &[f64], input: &Batch) -> Result<Batch> {
        self.check(params, input)?;
        let mut x = input.clone().reshape(self.shapes[0])?;
        let mut i = 0;
        while i < self.layers.len() {
            if self.fused(i) {
                x = self.run_fused(i, params, &x);
                i += 2;
            } else {
                x = self.run_layer(i, params, &x).0;
                i += 1;
            }
        }
        Ok(x)
    }

    /// Forward pass that keeps what [`Sequential::backward`] needs.
    pub fn forward_traced(&self, params: &[f64], input: Batch) -> Result<(Batch, Trace)> {
        self.check(params, &input)?;
        let mut x = input.reshape(self.shapes[0])?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut argmaxes = Vec::with_capacity(self.layers.len());
        let mut i = 0;
        while i < self.layers.len() {
            if self.fused(i) {
                let y = self.run_fused(i, params, &x);
                inputs.extend([Some(x), None]);
                argmaxes.extend([None, None]);
                x = y;
                i += 2;
            } else {
                let (y, argmax) = self.run_layer(i, params, &x);
                inputs.push(Some(x));
                argmaxes.push(argmax);
                x = y;
                i += 1;
            }
        }
        Ok((
            x,
            Trace {
                inputs,
                argmax: argmaxes,
            },
        ))
    }

    /// Backpropagates `grad_out`, accumulating into `grads` (same layout as
    /// `params`). Returns the input gradient only when `want_input_grad`.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        grad_out: Batch,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Option<Batch>> {
        if grads.len() != self.param_count {
            return Err(NnError::LengthMismatch {
                expected: self.param_count,
                actual: grads.len(),
            });
        }
        if grad_out.shape().len() != self.output_shape().len() {
            return Err(NnError::config(
                &self.name,
                format!(
                    "gradient {} does not match output {}",
                    grad_out.shape(),
                    self.output_shape()
                ),
            ));
        }
        let mut g = grad_out.reshape(self.output_shape())?;
        let mut end = self.layers.len();
        while end > 0 {
            if end >= 2 && self.fused(end - 2) {
                let i = end - 2;
                let LayerSpec::Conv(spec) = &self.layers[i + 1] else {
                    unreachable!("fused pair ends in a convolution")
                };
                let x = trace.inputs[i].as_ref().expect("fused trace");
                let n = x.count();
                let (h, w, _) = self.shapes[i].dims();
                let range = self.layer_params(i + 1);
                let mut gx = (i > 0 || want_input_grad).then(|| Batch::zeros(self.shapes[i], n));
                conv::upsample_conv_backward_batch(
                    spec,
                    h,
                    w,
                    n,
                    x.data(),
                    &params[range.clone()],
                    g.data(),
                    &mut grads[range],
                    gx.as_mut().map(|b| b.data_mut()),
                );
                match gx {
                    Some(b) => g = b,
                    None => return Ok(None),
                }
                end -= 2;
                continue;
            }
            end -= 1;
            let i = end;
            let x = trace.inputs[i].as_ref().expect("layer trace");
            let n = x.count();
            let in_shape = self.shapes[i];
            let (h, w, c) = in_shape.dims();
            let range = self.layer_params(i);
            let p = &params[range.clone()];
            let gp = &mut grads[range];
            let need_input = i > 0 || want_input_grad;
            let mut gx = need_input.then(|| Batch::zeros(in_shape, n));
            match &self.layers[i] {
                LayerSpec::Conv(spec) => conv::backward_batch(
                    spec,
                    h,
                    w,
                    n,
                    x.data(),
                    p,
                    g.data(),
                    gp,
                    gx.as_mut().map(|b| b.data_mut()),
                ),
                LayerSpec::Dense(spec) => dense::backward_batch(
                    spec,
                    n,
                    x.data(),
                    p,
                    g.data(),
                    gp,
                    gx.as_mut().map(|b| b.data_mut()),
                ),
                LayerSpec::MaxPool2x2 => {
                    if let Some(b) = gx.as_mut() {
                        let idx = trace.argmax[i].as_ref().expect("pool trace");
                        pool::maxpool_backward_batch(idx, g.data(), b.data_mut());
                    }
                }
                LayerSpec::Upsample2x2 => {
                    if let Some(b) = gx.as_mut() {
                        pool::upsample_backward_batch(h, w, c, n, g.data(), b.data_mut());
                    }
                }
                LayerSpec::Activation(kind) => {
                    if let Some(b) = gx.as_mut() {
                        activation::backward_batch(
                            *kind,
                            in_shape.len(),
                            x.data(),
                            g.data(),
                            b.data_mut(),
                        );
                    }
                }
            }
            match gx {
                Some(b) => g = b,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}
