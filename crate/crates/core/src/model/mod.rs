//! The GCAE and its baselines on top of the layer engine.
//!
//! Parameters live in one [`ParamVector`] laid out encoder | decoder | head,
//! with one segment per parameterized layer (`encoder.0`, `decoder.1`, ...).

mod arch;
pub mod checkpoint;
mod init;

use std::ops::Range;
use std::sync::Arc;

use fedhome_nn::activation::softmax;
use fedhome_nn::loss::softmax_crossentropy_batch;
use fedhome_nn::{Batch, NnError, ParamVector, Segment, Sequential, Shape, Tensor};

pub use arch::{Architecture, IMAGE_CHANNELS, IMAGE_SIDE, INPUT_SHAPE, NUM_CLASSES};
pub use init::{glorot_limit, init_params};

use crate::error::{Error, Result};

/// Rows per chunk when running inference over large sample sets.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct Model {
    arch: Architecture,
    encoder: Sequential,
    decoder: Option<Sequential>,
    head: Sequential,
    layout: Arc<[Segment]>,
    encoder_range: Range<usize>,
    decoder_range: Range<usize>,
    head_range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub latent: Tensor,
    pub reconstruction: Option<Tensor>,
    pub class_probs: Vec<f64>,
}

/// Batch-mean loss terms: `total = prediction + lambda * reconstruction`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub prediction: f64,
    pub reconstruction: f64,
}

impl Model {
    pub fn new(arch: Architecture) -> Self {
        let encoder = Sequential::new("encoder", INPUT_SHAPE, arch.encoder_layers())
            .expect("encoder stack is consistent");
        let latent = encoder.output_shape();
        let decoder = arch.has_decoder().then(|| {
            Sequential::new("decoder", latent, arch.decoder_layers())
                .expect("decoder stack is consistent")
        });
        let head = Sequential::new("head", Shape::Vector(latent.len()), arch.head_layers())
            .expect("head stack is consistent");

        let mut segments = Vec::new();
        let mut offset = 0;
        let mut ranges = Vec::new();
        for net in [Some(&encoder), decoder.as_ref(), Some(&head)] {
            let start = offset;
            if let Some(net) = net {
                for (name, i) in net.param_segments() {
                    let len = net.layers()[i].param_count();
                    segments.push(Segment { name, offset, len });
                    offset += len;
                }
            }
            ranges.push(start..offset);
        }
        if let Some(dec) = &decoder {
            assert_eq!(dec.output_shape(), INPUT_SHAPE, "decoder must reproduce the input");
        }
        let head_range = ranges.pop().expect("three ranges");
        let decoder_range = ranges.pop().expect("three ranges");
        let encoder_range = ranges.pop().expect("three ranges");
        Model {
            arch,
            encoder,
            decoder,
            head,
            layout: segments.into(),
            encoder_range,
            decoder_range,
            head_range,
        }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn encoder(&self) -> &Sequential {
        &self.encoder
    }

    pub fn decoder(&self) -> Option<&Sequential> {
        self.decoder.as_ref()
    }

    pub fn head(&self) -> &Sequential {
        &self.head
    }

    pub fn layout(&self) -> Arc<[Segment]> {
        Arc::clone(&self.layout)
    }

    pub fn param_count(&self) -> usize {
        self.head_range.end
    }

    pub fn latent_shape(&self) -> Shape {
        self.encoder.output_shape()
    }

    pub fn latent_len(&self) -> usize {
        self.latent_shape().len()
    }

    pub fn encoder_range(&self) -> Range<usize> {
        self.encoder_range.clone()
    }

    pub fn decoder_range(&self) -> Range<usize> {
        self.decoder_range.clone()
    }

    pub fn head_range(&self) -> Range<usize> {
        self.head_range.clone()
    }

    pub fn init(&self, seed: u64) -> ParamVector {
        init_params(self, seed)
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::with_layout(self.layout(), vec![0.0; self.param_count()])
            .expect("layout length")
    }

    pub fn wrap(&self, values: Vec<f64>) -> Result<ParamVector> {
        Ok(ParamVector::with_layout(self.layout(), values)?)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(NnError::LengthMismatch {
                expected: self.param_count(),
                actual: params.len(),
            }
            .into());
        }
        Ok(())
    }

    fn check_images(&self, images: &Batch) -> Result<()> {
        if images.shape() != INPUT_SHAPE {
            return Err(NnError::Config {
                layer: "input".into(),
                message: format!("expected {INPUT_SHAPE}, got {}", images.shape()),
            }
            .into());
        }
        Ok(())
    }

    /// Latent, reconstruction (GCAE only) and class probabilities for one image.
    pub fn forward(&self, params: &ParamVector, x: &Tensor) -> Result<ForwardOutput> {
        let p = params.values();
        self.check_params(p)?;
        let images = Batch::from_tensor(x);
        self.check_images(&images)?;
        let latent = self.encoder.forward(&p[self.encoder_range()], &images)?;
        let reconstruction = match &self.decoder {
            Some(dec) => Some(dec.forward(&p[self.decoder_range()], &latent)?.to_tensor(0)),
            None => None,
        };
        let flat = latent.reshape(Shape::Vector(self.latent_len()))?;
        let logits = self.head.forward(&p[self.head_range()], &flat)?;
        Ok(ForwardOutput {
            latent: flat.to_tensor(0),
            reconstruction,
            class_probs: softmax(logits.data()),
        })
    }

    /// Encoder output for every image, flattened to vectors.
    pub fn encode(&self, params: &[f64], images: &Batch) -> Result<Batch> {
        self.check_params(params)?;
        self.check_images(images)?;
        let enc = &params[self.encoder_range()];
        let mut data = Vec::with_capacity(images.count() * self.latent_len());
        for start in (0..images.count()).step_by(INFERENCE_CHUNK) {
            let end = (start + INFERENCE_CHUNK).min(images.count());
            let chunk = Batch::stack(INPUT_SHAPE, (start..end).map(|i| images.sample(i)))?;
            data.extend(self.encoder.forward(enc, &chunk)?.into_data());
        }
        Ok(Batch::new(Shape::Vector(self.latent_len()), images.count(), data)?)
    }

    /// Head logits for latent vectors.
    pub fn head_logits(&self, params: &[f64], latents: &Batch) -> Result<Batch> {
        self.check_params(params)?;
        Ok(self.head.forward(&params[self.head_range()], latents)?)
    }

    /// Arg-max class for each latent; ties resolve to the lowest class index.
    pub fn classify_latents(&self, params: &[f64], latents: &Batch) -> Result<Vec<usize>> {
        let logits = self.head_logits(params, latents)?;
        Ok(logits.data().chunks_exact(NUM_CLASSES).map(argmax).collect())
    }

    pub fn predict(&self, params: &[f64], images: &Batch) -> Result<Vec<usize>> {
        let latents = self.encode(params, images)?;
        self.classify_latents(params, &latents)
    }

    /// Mean combined loss over the batch and its gradient as a new vector.
    pub fn combined_loss(
        &self,
        params: &ParamVector,
        images: &Batch,
        labels: &[usize],
        lambda: f64,
    ) -> Result<(LossBreakdown, ParamVector)> {
        let mut grads = params.zeros_like();
        let loss = self.accumulate_gradients(
            params.values(),
            images,
            labels,
            lambda,
            grads.values_mut(),
        )?;
        Ok((loss, grads))
    }

    /// Adds the gradient of the batch-mean combined loss
    /// `mean_i [CE(head(enc(x_i)), y_i) + lambda * ||x_i - dec(enc(x_i))||²]`
    /// into `grads`. With `lambda == 0` the decoder is not evaluated at all.
    pub fn accumulate_gradients(
        &self,
        params: &[f64],
        images: &Batch,
        labels: &[usize],
        lambda: f64,
        grads: &mut [f64],
    ) -> Result<LossBreakdown> {
        self.check_params(params)?;
        self.check_images(images)?;
        if grads.len() != params.len() {
            return Err(NnError::LengthMismatch {
                expected: params.len(),
                actual: grads.len(),
            }
            .into());
        }
        let n = images.count();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if labels.len() != n {
            return Err(NnError::LengthMismatch {
                expected: n,
                actual: labels.len(),
            }
            .into());
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let scale = 1.0 / n as f64;
        let enc_p = &params[self.encoder_range()];
        let (latent, enc_trace) = self.encoder.forward_traced(enc_p, images.clone())?;
        let flat = latent.clone().reshape(Shape::Vector(self.latent_len()))?;

        let head_p = &params[self.head_range()];
        let (logits, head_trace) = self.head.forward_traced(head_p, flat)?;
        let mut logit_grad = vec![0.0; logits.data().len()];
        let ce_sum =
            softmax_crossentropy_batch(logits.data(), NUM_CLASSES, labels, scale, &mut logit_grad)?;
        let logit_grad = Batch::new(logits.shape(), n, logit_grad)?;
        let mut latent_grad = self
            .head
            .backward(head_p, &head_trace, logit_grad, &mut grads[self.head_range()], true)?
            .expect("input gradient requested");

        let mut rec_sum = 0.0;
        if let (Some(dec), true) = (&self.decoder, lambda > 0.0) {
            let dec_p = &params[self.decoder_range()];
            let (recon, dec_trace) = dec.forward_traced(dec_p, latent)?;
            let mut recon_grad = vec![0.0; recon.data().len()];
            rec_sum = fedhome_nn::loss::sum_squared_error(
                recon.data(),
                images.data(),
                lambda * scale,
                &mut recon_grad,
            );
            let recon_grad = Batch::new(recon.shape(), n, recon_grad)?;
            let from_decoder = dec
                .backward(dec_p, &dec_trace, recon_grad, &mut grads[self.decoder_range()], true)?
                .expect("input gradient requested");
            for (g, d) in latent_grad.data_mut().iter_mut().zip(from_decoder.data()) {
                *g += d;
            }
        }

        self.encoder.backward(
            enc_p,
            &enc_trace,
            latent_grad,
            &mut grads[self.encoder_range()],
            false,
        )?;

        let prediction = ce_sum * scale;
        let reconstruction = rec_sum * scale;
        let total = prediction + lambda * reconstruction;
        if !total.is_finite() {
            return Err(NnError::NonFinite {
                value: total,
                context: "combined loss".into(),
            }
            .into());
        }
        Ok(LossBreakdown {
            total,
            prediction,
            reconstruction,
        })
    }

    /// Mean cross-entropy of the head alone on latent inputs; only the head
    /// slice of `grads` is touched.
    pub fn accumulate_head_gradients(
        &self,
        params: &[f64],
        latents: &Batch,
        labels: &[usize],
        grads: &mut [f64],
    ) -> Result<f64> {
        self.check_params(params)?;
        let n = latents.count();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let head_p = &params[self.head_range()];
        let (logits, trace) = self.head.forward_traced(head_p, latents.clone())?;
        let mut logit_grad = vec![0.0; logits.data().len()];
        let scale = 1.0 / n as f64;
        let ce_sum =
            softmax_crossentropy_batch(logits.data(), NUM_CLASSES, labels, scale, &mut logit_grad)?;
        let logit_grad = Batch::new(logits.shape(), n, logit_grad)?;
        self.head
            .backward(head_p, &trace, logit_grad, &mut grads[self.head_range()], false)?;
        Ok(ce_sum * scale)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_lengths() {
        let m = Model::new(Architecture::Gcae);
        assert_eq!(m.encoder_range().len(), 6_680);
        assert_eq!(m.decoder_range().len(), 18_451);
        assert_eq!(m.head_range().len(), 27_018);
        assert_eq!(m.latent_len(), 200);
        assert_eq!(m.param_count(), 52_149);
        let p = m.init(0);
        assert_eq!(p.group("encoder").unwrap().len(), 6_680);
        assert_eq!(p.group("decoder").unwrap().len(), 18_451);
        assert_eq!(p.group("head").unwrap().len(), 27_018);
    }

    #[test]
    fn baseline_layouts() {
        let m = Model::new(Architecture::FlCnnLarge);
        assert_eq!(m.latent_len(), 400);
        assert!(m.decoder().is_none());
        assert!(m.decoder_range().is_empty());
        let mlp = Model::new(Architecture::FlMlp);
        assert_eq!(mlp.latent_len(), 1200);
        assert!(mlp.encoder_range().is_empty());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.0; 3]), 0);
    }
}
