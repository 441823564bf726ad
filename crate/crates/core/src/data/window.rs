use super::stream::{LabelSegment, Record, SensorStream};
use super::Activity;
use crate::error::{Error, Result};

pub const WINDOW_SECONDS: f64 = 1.0;
pub const OVERLAP: f64 = 0.8;

/// Window length and stride in records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    pub length: usize,
    pub stride: usize,
}

impl WindowGeometry {
    pub fn new(sample_rate: f64, window_seconds: f64, overlap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::Config(format!("overlap must be in [0, 1), got {overlap}")));
        }
        let length = integral(sample_rate * window_seconds)
            .filter(|&l| l > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "{sample_rate} Hz x {window_seconds} s is not a whole number of records"
                ))
            })?;
        let stride = integral(length as f64 * (1.0 - overlap))
            .filter(|&s| s > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "overlap {overlap} does not give a whole-record stride for {length} records"
                ))
            })?;
        Ok(WindowGeometry { length, stride })
    }

    /// Windows fitting in `len` records; the partial tail is dropped.
    pub fn count(&self, len: usize) -> usize {
        if len < self.length {
            0
        } else {
            (len - self.length) / self.stride + 1
        }
    }

    pub fn offsets(&self, len: usize) -> impl Iterator<Item = usize> {
        let stride = self.stride;
        (0..self.count(len)).map(move |i| i * stride)
    }
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            length: 200,
            stride: 40,
        }
    }
}

fn integral(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() < 1e-9 && r >= 0.0).then_some(r as usize)
}

/// A window borrowed from its stream; `start` indexes the stream's records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub user_id: usize,
    pub activity: Activity,
    pub segment: usize,
    pub start: usize,
    pub records: &'a [Record],
}

impl Window<'_> {
    pub fn overlaps(&self, other: &Window<'_>) -> bool {
        self.user_id == other.user_id
            && self.start < other.start + other.records.len()
            && other.start < self.start + self.records.len()
    }
}

/// Windows lying entirely inside one label segment, in stream order.
pub fn segment_windows(
    stream: &SensorStream,
    window_seconds: f64,
    overlap: f64,
) -> Result<Vec<Window<'_>>> {
    let geometry = WindowGeometry::new(stream.sample_rate, window_seconds, overlap)?;
    Ok(windows_with(stream, geometry))
}

pub fn windows_with(stream: &SensorStream, geometry: WindowGeometry) -> Vec<Window<'_>> {
    let mut out = Vec::new();
    for (i, seg) in stream.segments.iter().enumerate() {
        out.extend(segment_iter(stream, i, seg, geometry));
    }
    out
}

fn segment_iter<'a>(
    stream: &'a SensorStream,
    index: usize,
    seg: &'a LabelSegment,
    geometry: WindowGeometry,
) -> impl Iterator<Item = Window<'a>> + 'a {
    geometry.offsets(seg.len()).map(move |off| {
        let start = seg.start + off;
        Window {
            user_id: stream.user_id,
            activity: seg.activity,
            segment: index,
            start,
            records: &stream.records[start..start + geometry.length],
        }
    })
}
