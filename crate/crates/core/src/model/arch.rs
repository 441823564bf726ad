use std::fmt;
use std::str::FromStr;

use fedhome_nn::{LayerSpec, Shape};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Side length of the square sensor image.
pub const IMAGE_SIDE: usize = 20;
pub const IMAGE_CHANNELS: usize = 3;
pub const INPUT_SHAPE: Shape = Shape::image(IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS);
pub const NUM_CLASSES: usize = 10;

/// The four networks compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Encoder + decoder + prediction head.
    Gcae,
    /// Encoder (32/16/8 filters) + head, no decoder.
    FlCnn,
    /// Encoder with 64/32/16 filters + head on a 400-long latent.
    FlCnnLarge,
    /// Three dense layers on the flattened 1200-value image.
    FlMlp,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Gcae,
        Architecture::FlCnn,
        Architecture::FlCnnLarge,
        Architecture::FlMlp,
    ];

    /// Stable numeric id written into checkpoint headers.
    pub fn id(self) -> u32 {
        match self {
            Architecture::Gcae => 1,
            Architecture::FlCnn => 2,
            Architecture::FlCnnLarge => 3,
            Architecture::FlMlp => 4,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Gcae => "gcae",
            Architecture::FlCnn => "fl-cnn",
            Architecture::FlCnnLarge => "fl-cnn-large",
            Architecture::FlMlp => "fl-mlp",
        }
    }

    pub fn has_decoder(self) -> bool {
        matches!(self, Architecture::Gcae)
    }

    pub fn encoder_layers(self) -> Vec<LayerSpec> {
        let conv_stack = |f1, f2, f3| {
            vec![
                LayerSpec::conv(3, IMAGE_CHANNELS, f1),
                LayerSpec::relu(),
                LayerSpec::MaxPool2x2,
                LayerSpec::conv(3, f1, f2),
                LayerSpec::relu(),
                LayerSpec::MaxPool2x2,
                LayerSpec::conv(3, f2, f3),
                LayerSpec::relu(),
            ]
        };
        match self {
            Architecture::Gcae | Architecture::FlCnn => conv_stack(32, 16, 8),
            Architecture::FlCnnLarge => conv_stack(64, 32, 16),
            Architecture::FlMlp => Vec::new(),
        }
    }

    /// Decoder from the `5x5x8` latent back to the input image.
    pub fn decoder_layers(self) -> Vec<LayerSpec> {
        match self {
            Architecture::Gcae => vec![
                LayerSpec::Upsample2x2,
                LayerSpec::conv(5, 8, 16),
                LayerSpec::relu(),
                LayerSpec::Upsample2x2,
                LayerSpec::conv(5, 16, 32),
                LayerSpec::relu(),
                LayerSpec::conv(5, 32, IMAGE_CHANNELS),
                LayerSpec::sigmoid(),
            ],
            _ => Vec::new(),
        }
    }

    /// Head up to the logits; the softmax is applied by the model.
    pub fn head_layers(self) -> Vec<LayerSpec> {
        match self {
            Architecture::Gcae | Architecture::FlCnn => vec![
                LayerSpec::dense(200, 128),
                LayerSpec::relu(),
                LayerSpec::dense(128, NUM_CLASSES),
            ],
            Architecture::FlCnnLarge => vec![
                LayerSpec::dense(400, 128),
                LayerSpec::relu(),
                LayerSpec::dense(128, NUM_CLASSES),
            ],
            Architecture::FlMlp => vec![
                LayerSpec::dense(1200, 1200),
                LayerSpec::relu(),
                LayerSpec::dense(1200, 100),
                LayerSpec::relu(),
                LayerSpec::dense(100, NUM_CLASSES),
            ],
        }
    }

    /// Parameter count straight from the layer formulas.
    pub fn param_count(self) -> usize {
        self.encoder_layers()
            .iter()
            .chain(&self.decoder_layers())
            .chain(&self.head_layers())
            .map(LayerSpec::param_count)
            .sum()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcae" | "fedhome" => Ok(Architecture::Gcae),
            "fl-cnn" | "cnn" => Ok(Architecture::FlCnn),
            "fl-cnn-large" | "cnn-large" => Ok(Architecture::FlCnnLarge),
            "fl-mlp" | "mlp" => Ok(Architecture::FlMlp),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_parameter_counts() {
        assert_eq!(Architecture::Gcae.param_count(), 52_149);
        assert_eq!(Architecture::FlCnn.param_count(), 33_698);
        assert_eq!(Architecture::FlCnnLarge.param_count(), 77_498);
        assert_eq!(Architecture::FlMlp.param_count(), 1_562_310);
    }

    #[test]
    fn ids_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(Architecture::from_id(a.id()), Some(a));
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
        assert!(Architecture::from_id(0).is_none());
    }
}
