//! Image tensors and in-memory datasets.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::linalg::Matrix;

/// Channel count and spatial extent of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A C×H×W image stored row-major per channel, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.channels == 0 || shape.height == 0 || shape.width == 0 {
            return Err(Error::invalid(format!("degenerate image shape {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        check_finite(&data, "image data")?;
        Ok(ImageTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        ImageTensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        ImageTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds an image from one matrix per channel.
    pub fn from_channels(channels: &[Matrix]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("image needs at least one channel"))?;
        let shape = Shape::new(channels.len(), first.rows(), first.cols());
        let mut data = Vec::with_capacity(shape.len());
        for m in channels {
            if m.rows() != shape.height || m.cols() != shape.width {
                return Err(Error::shape(
                    (shape.height, shape.width),
                    (m.rows(), m.cols()),
                ));
            }
            data.extend_from_slice(m.as_slice());
        }
        ImageTensor::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.shape.height + row) * self.shape.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let w = self.shape.width;
        let h = self.shape.height;
        self.data[(channel * h + row) * w + col] = value;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.shape.plane();
        &self.data[channel * plane..(channel + 1) * plane]
    }

    pub fn channel_mut(&mut self, channel: usize) -> &mut [f64] {
        let plane = self.shape.plane();
        &mut self.data[channel * plane..(channel + 1) * plane]
    }

    pub fn channel_matrix(&self, channel: usize) -> Matrix {
        Matrix::from_vec(
            self.shape.height,
            self.shape.width,
            self.channel(channel).to_vec(),
        )
        .expect("channel plane matches its own shape")
    }

    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ImageTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// An ordered collection of same-shaped images with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageTensor>,
    pub labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(images: Vec<ImageTensor>) -> Result<Self> {
        Self::with_labels(images, None)
    }

    pub fn with_labels(images: Vec<ImageTensor>, labels: Option<Vec<u32>>) -> Result<Self> {
        if let Some(first) = images.first() {
            let shape = first.shape();
            if let Some(i) = images.iter().position(|im| im.shape() != shape) {
                return Err(Error::at_image(i, Error::shape(shape, images[i].shape())));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != images.len() {
                return Err(Error::shape(images.len(), labels.len()));
            }
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> Option<Shape> {
        self.images.first().map(ImageTensor::shape)
    }

    /// Picks the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        self.select(&(0..n).collect::<Vec<_>>())
    }
}
