use fedhome_nn::{LayerSpec, ParamVector};
use rand::distr::{Distribution, Uniform};

use super::Model;
use crate::seed::{self, tag};

/// Glorot-uniform weights and zero biases.
///
/// Encoder, decoder and head draw from separate seeded streams, so an
/// architecture without a decoder gets exactly the same encoder and head
/// weights as the full GCAE for the same seed.
pub fn init_params(model: &Model, seed: u64) -> ParamVector {
    let mut values = Vec::with_capacity(model.param_count());
    for (net, stream) in [
        (Some(model.encoder()), tag::INIT_ENCODER),
        (model.decoder(), tag::INIT_DECODER),
        (Some(model.head()), tag::INIT_HEAD),
    ] {
        let Some(net) = net else { continue };
        let mut rng = seed::rng(seed, &[stream]);
        for layer in net.layers() {
            let Some((fan_in, fan_out)) = layer.fans() else {
                continue;
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
            values.extend((0..layer.weight_count()).map(|_| dist.sample(&mut rng)));
            values.extend(std::iter::repeat_n(0.0, layer.param_count() - layer.weight_count()));
        }
    }
    ParamVector::with_layout(model.layout(), values).expect("layout matches layer list")
}

/// Half-width of the Glorot range for a parameterized layer.
pub fn glorot_limit(layer: &LayerSpec) -> Option<f64> {
    layer
        .fans()
        .map(|(fan_in, fan_out)| (6.0 / (fan_in + fan_out) as f64).sqrt())
}
