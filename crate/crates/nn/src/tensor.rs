use std::fmt;

use crate::error::{NnError, Result};

/// Per-sample shape. Images are stored row-major with channels innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
    Vector(usize),
}

impl Shape {
    pub const fn image(height: usize, width: usize, channels: usize) -> Self {
        Shape::Image {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(height, width, channels)`; vectors are reported as `1 x 1 x n`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match *self {
            Shape::Image {
                height,
                width,
                channels,
            } => (height, width, channels),
            Shape::Vector(n) => (1, 1, n),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Image {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            Shape::Vector(n) => write!(f, "({n})"),
        }
    }
}

/// A single sample: an image or a flat vector of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(NnError::LengthMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value at `(row, col, channel)` of an image tensor.
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        let (_, w, c) = self.shape.dims();
        self.data[(row * w + col) * c + channel]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `count` samples of the same shape stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    shape: Shape,
    count: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(shape: Shape, count: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() * count {
            return Err(NnError::LengthMismatch {
                expected: shape.len() * count,
                actual: data.len(),
            });
        }
        Ok(Batch { shape, count, data })
    }

    pub fn zeros(shape: Shape, count: usize) -> Self {
        Batch {
            shape,
            count,
            data: vec![0.0; shape.len() * count],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Batch {
            shape: t.shape,
            count: 1,
            data: t.data.clone(),
        }
    }

    /// Stacks samples that must all share `shape`.
    pub fn stack<'a, I>(shape: Shape, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        let mut count = 0;
        for s in samples {
            if s.len() != shape.len() {
                return Err(NnError::LengthMismatch {
                    expected: shape.len(),
                    actual: s.len(),
                });
            }
            data.extend_from_slice(s);
            count += 1;
        }
        Ok(Batch { shape, count, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn to_tensor(&self, i: usize) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.sample(i).to_vec(),
        }
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        (0..self.count).map(|i| self.to_tensor(i)).collect()
    }

    /// Reinterprets the per-sample shape without touching data.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(NnError::LengthMismatch {
                expected: self.shape.len(),
                actual: shape.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }
}
