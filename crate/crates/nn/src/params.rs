use std::ops::Range;
use std::sync::Arc;

use crate::error::{NnError, Result};

/// Named contiguous slice of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat `f64` view of every model weight plus the table saying which layer
/// owns which slice. This is the unit that travels between server and clients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Arc<[Segment]>,
}

impl ParamVector {
    /// Concatenates named parts in order.
    pub fn gather<S: Into<String>>(parts: impl IntoIterator<Item = (S, Vec<f64>)>) -> Self {
        let mut values = Vec::new();
        let mut segments = Vec::new();
        for (name, part) in parts {
            segments.push(Segment {
                name: name.into(),
                offset: values.len(),
                len: part.len(),
            });
            values.extend(part);
        }
        ParamVector {
            values,
            segments: segments.into(),
        }
    }

    /// Wraps `values` in an existing layout.
    pub fn with_layout(segments: Arc<[Segment]>, values: Vec<f64>) -> Result<Self> {
        let expected = segments.last().map_or(0, |s| s.offset + s.len);
        if values.len() != expected {
            return Err(NnError::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(ParamVector { values, segments })
    }

    /// Same layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParamVector {
            values: vec![0.0; self.values.len()],
            segments: Arc::clone(&self.segments),
        }
    }

    /// Splits back into the named parts (inverse of [`ParamVector::gather`]).
    pub fn scatter(&self) -> Vec<(&str, &[f64])> {
        self.segments
            .iter()
            .map(|s| (s.name.as_str(), &self.values[s.range()]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn layout(&self) -> Arc<[Segment]> {
        Arc::clone(&self.segments)
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        let s = self.find(name)?;
        Ok(&self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.find(name)?.range();
        Ok(&mut self.values[r])
    }

    fn find(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| NnError::UnknownSegment(name.to_string()))
    }

    /// Span covering every segment named `group` or `group.*`.
    /// Segments of one group are always adjacent in layouts built by this crate.
    pub fn group_range(&self, group: &str) -> Option<Range<usize>> {
        let dotted = format!("{group}.");
        let mut members = self
            .segments
            .iter()
            .filter(|s| s.name == group || s.name.starts_with(&dotted));
        let first = members.next()?;
        let end = members.fold(first.offset + first.len, |_, s| s.offset + s.len);
        Some(first.offset..end)
    }

    pub fn group(&self, group: &str) -> Result<&[f64]> {
        let r = self
            .group_range(group)
            .ok_or_else(|| NnError::UnknownSegment(group.to_string()))?;
        Ok(&self.values[r])
    }

    /// Little-endian bytes of the values, in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(segments: Arc<[Segment]>, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(NnError::LengthMismatch {
                expected: bytes.len() / 8 * 8 + 8,
                actual: bytes.len(),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::with_layout(segments, values)
    }
}
