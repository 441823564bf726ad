use std::fmt;

use crate::error::{NnError, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
}

/// Square, stride-1, same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            kernel,
            in_channels,
            out_channels,
        }
    }

    /// Weights are laid out `[ky][kx][c_in][c_out]`, followed by `c_out` biases.
    pub fn weight_count(&self) -> usize {
        self.kernel * self.kernel * self.in_channels * self.out_channels
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DenseSpec {
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseSpec {
    pub const fn new(inputs: usize, outputs: usize) -> Self {
        DenseSpec { inputs, outputs }
    }

    /// Weights are laid out `[input][output]`, followed by `outputs` biases.
    pub fn weight_count(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.outputs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv(ConvSpec),
    MaxPool2x2,
    Upsample2x2,
    Dense(DenseSpec),
    Activation(Activation),
}

impl LayerSpec {
    pub const fn conv(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv(ConvSpec::new(kernel, in_channels, out_channels))
    }

    pub const fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense(DenseSpec::new(inputs, outputs))
    }

    pub const fn relu() -> Self {
        LayerSpec::Activation(Activation::Relu)
    }

    pub const fn sigmoid() -> Self {
        LayerSpec::Activation(Activation::Sigmoid)
    }

    pub const fn softmax() -> Self {
        LayerSpec::Activation(Activation::Softmax)
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv(c) => c.param_count(),
            LayerSpec::Dense(d) => d.param_count(),
            LayerSpec::MaxPool2x2 | LayerSpec::Upsample2x2 | LayerSpec::Activation(_) => 0,
        }
    }

    /// `(fan_in, fan_out)` for parameterized layers.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Conv(c) => {
                let area = c.kernel * c.kernel;
                Some((area * c.in_channels, area * c.out_channels))
            }
            LayerSpec::Dense(d) => Some((d.inputs, d.outputs)),
            _ => None,
        }
    }

    /// Number of leading parameters that are weights (the rest are biases).
    pub fn weight_count(&self) -> usize {
        match self {
            LayerSpec::Conv(c) => c.weight_count(),
            LayerSpec::Dense(d) => d.weight_count(),
            _ => 0,
        }
    }

    /// Output shape for `input`, or a configuration error naming `name`.
    pub fn output_shape(&self, name: &str, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv(c) => {
                let Shape::Image {
                    height,
                    width,
                    channels,
                } = input
                else {
                    return Err(NnError::config(name, format!("conv needs an image, got {input}")));
                };
                if channels != c.in_channels {
                    return Err(NnError::config(
                        name,
                        format!("expected {} input channels, got {channels}", c.in_channels),
                    ));
                }
                if c.kernel % 2 == 0 || c.kernel == 0 {
                    return Err(NnError::config(name, "same padding needs an odd kernel"));
                }
                Ok(Shape::image(height, width, c.out_channels))
            }
            LayerSpec::MaxPool2x2 => match input {
                Shape::Image {
                    height,
                    width,
                    channels,
                } if height % 2 == 0 && width % 2 == 0 => {
                    Ok(Shape::image(height / 2, width / 2, channels))
                }
                _ => Err(NnError::config(
                    name,
                    format!("max-pool needs an image with even sides, got {input}"),
                )),
            },
            LayerSpec::Upsample2x2 => match input {
                Shape::Image {
                    height,
                    width,
                    channels,
                } => Ok(Shape::image(height * 2, width * 2, channels)),
                _ => Err(NnError::config(name, format!("up-sampling needs an image, got {input}"))),
            },
            LayerSpec::Dense(d) => {
                if input.len() != d.inputs {
                    return Err(NnError::config(
                        name,
                        format!("expected {} inputs, got {}", d.inputs, input.len()),
                    ));
                }
                Ok(Shape::Vector(d.outputs))
            }
            LayerSpec::Activation(_) => Ok(input),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv(c) => write!(
                f,
                "conv{}x{} {}->{}",
                c.kernel, c.kernel, c.in_channels, c.out_channels
            ),
            LayerSpec::MaxPool2x2 => f.write_str("maxpool2x2"),
            LayerSpec::Upsample2x2 => f.write_str("upsample2x2"),
            LayerSpec::Dense(d) => write!(f, "dense {}->{}", d.inputs, d.outputs),
            LayerSpec::Activation(Activation::Relu) => f.write_str("relu"),
            LayerSpec::Activation(Activation::Sigmoid) => f.write_str("sigmoid"),
            LayerSpec::Activation(Activation::Softmax) => f.write_str("softmax"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formulas() {
        assert_eq!(LayerSpec::conv(3, 3, 32).param_count(), 3 * 3 * 3 * 32 + 32);
        assert_eq!(LayerSpec::conv(5, 16, 32).param_count(), 12_832);
        assert_eq!(LayerSpec::dense(200, 128).param_count(), 25_728);
        assert_eq!(LayerSpec::MaxPool2x2.param_count(), 0);
        assert_eq!(LayerSpec::Upsample2x2.param_count(), 0);
        assert_eq!(LayerSpec::relu().param_count(), 0);
        assert_eq!(LayerSpec::softmax().param_count(), 0);
    }

    #[test]
    fn odd_side_into_maxpool_is_rejected() {
        let err = LayerSpec::MaxPool2x2
            .output_shape("pool1", Shape::image(5, 4, 2))
            .unwrap_err();
        assert!(matches!(err, NnError::Config { ref layer, .. } if layer == "pool1"));
    }

    #[test]
    fn conv_channel_mismatch_names_layer() {
        let err = LayerSpec::conv(3, 4, 8)
            .output_shape("enc.conv0", Shape::image(6, 6, 3))
            .unwrap_err();
        assert!(err.to_string().contains("enc.conv0"));
    }
}
