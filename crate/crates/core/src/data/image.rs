use fedhome_nn::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use super::stream::Record;
use crate::error::{Error, Result};
use crate::model::{IMAGE_CHANNELS, IMAGE_SIDE, INPUT_SHAPE};

/// Per-channel (sensor axis) range over the training windows; acceleration
/// and angular velocity of the same axis share a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl NormStats {
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a [Record]>) -> Result<Self> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for w in windows {
            for r in w {
                for ch in 0..3 {
                    for v in [r[ch], r[ch + 3]] {
                        min[ch] = min[ch].min(v);
                        max[ch] = max[ch].max(v);
                    }
                }
            }
        }
        let stats = NormStats { min, max };
        if !stats.min.iter().chain(&stats.max).all(|v| v.is_finite()) {
            return Err(Error::Config(
                "normalization statistics need at least one finite window".into(),
            ));
        }
        Ok(stats)
    }

    fn scale(&self, ch: usize, v: f64) -> f64 {
        let span = self.max[ch] - self.min[ch];
        if span > 0.0 {
            ((v - self.min[ch]) / span).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn degenerate_channels(&self) -> Vec<usize> {
        (0..3).filter(|&ch| self.max[ch] <= self.min[ch]).collect()
    }
}

/// One normalized window and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub image: Tensor,
    pub label: usize,
    pub user_id: usize,
}

/// Lays a `T x 6` window out as a `20 x 20 x 3` image: positions `0..T` hold
/// the acceleration ticks and `T..2T` the angular-velocity ticks, filled
/// row-major, with sensor axes as channels.
pub fn window_to_image(window: &[Record], norm: &NormStats) -> Result<Tensor> {
    let positions = IMAGE_SIDE * IMAGE_SIDE;
    if 2 * window.len() != positions {
        return Err(Error::Config(format!(
            "a {IMAGE_SIDE}x{IMAGE_SIDE} image holds {} ticks per window, got {}",
            positions / 2,
            window.len()
        )));
    }
    let degenerate = norm.degenerate_channels();
    if !degenerate.is_empty() {
        log::warn!("channels {degenerate:?} have zero range; mapped to 0.5");
    }
    let mut data = Vec::with_capacity(positions * IMAGE_CHANNELS);
    for sensor in 0..2 {
        for r in window {
            for ch in 0..3 {
                data.push(norm.scale(ch, r[3 * sensor + ch]));
            }
        }
    }
    debug_assert_eq!(Shape::image(IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS), INPUT_SHAPE);
    Ok(Tensor::new(INPUT_SHAPE, data)?)
}
