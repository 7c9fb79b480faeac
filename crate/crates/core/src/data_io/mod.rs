//! Dataset storage, ingestion and the synthetic corpora.

mod checkpoint;
mod container;
mod manifest;
mod synth;

pub use checkpoint::{read_checkpoint, write_checkpoint, checkpoint_bytes, parse_checkpoint};
pub use container::{Dtype, Tensor, TensorData};
pub use manifest::{load_dataset, DatasetManifest, DatasetRole, DatasetSource, VAL_OOD_LIMIT};
pub use synth::{synth_generate, SynthKind};

use std::path::Path;

use container::format_err;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Dataset, ImageTensor, Shape};

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

/// Packs a dataset as an `[N, C, H, W]` tensor. `U8` rounds `x·255`.
pub fn dataset_to_tensor(dataset: &Dataset, dtype: Dtype) -> Result<Tensor> {
    let shape = dataset.shape().ok_or_else(|| Error::invalid("cannot store an empty dataset"))?;
    let values = dataset.images.iter().flat_map(|im| im.as_slice().iter().copied());
    let data = match dtype {
        Dtype::U8 => TensorData::U8(values.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).collect()),
        Dtype::F32 => TensorData::F32(values.map(|x| x as f32).collect()),
        Dtype::F64 => TensorData::F64(values.collect()),
    };
    let dims = [dataset.len(), shape.channels, shape.height, shape.width]
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::invalid("dimension exceeds u32")))
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(dims, data)
}

/// Reads `[N, C, H, W]` (or `[N, H, W]` as one channel).
pub fn tensor_to_dataset(tensor: &Tensor) -> Result<Dataset> {
    let d: Vec<usize> = tensor.dims.iter().map(|&x| x as usize).collect();
    let (n, shape) = match d.as_slice() {
        &[n, c, h, w] => (n, Shape::new(c, h, w)),
        &[n, h, w] => (n, Shape::new(1, h, w)),
        _ => return Err(format_err(7, format!("expected 3 or 4 dims, found {}", d.len()))),
    };
    if n == 0 || shape.is_empty() {
        return Err(format_err(8, "dataset tensor has a zero dimension"));
    }
    let values = tensor.data.to_unit_f64();
    let images = values
        .chunks_exact(shape.len())
        .enumerate()
        .map(|(i, c)| ImageTensor::new(shape, c.to_vec()).map_err(|e| Error::at_image(i, e)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images)
}

pub fn write_dataset(path: &Path, dataset: &Dataset, dtype: Dtype) -> Result<()> {
    dataset_to_tensor(dataset, dtype)?.write(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    tensor_to_dataset(&Tensor::read(path)?)
}

/// Labels as a 1-D `u8` container.
pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let bytes = labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds 255"))))
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(vec![labels.len() as u32], TensorData::U8(bytes))?.write(path)
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let t = Tensor::read(path)?;
    match (&t.data, t.dims.len()) {
        (TensorData::U8(v), 1) => Ok(v.iter().map(|&b| b as u32).collect()),
        _ => Err(format_err(6, "labels must be a 1-D byte tensor")),
    }
}

/// Parses CIFAR-10 binary batches: per record one label byte, then 1024
/// red, 1024 green and 1024 blue bytes in row-major order.
pub fn parse_cifar_binary(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(format_err(0, "empty CIFAR batch"));
    }
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(format_err(
            whole,
            format!("truncated record: {} of {CIFAR_RECORD} bytes", bytes.len() - whole),
        ));
    }
    let shape = Shape::new(3, 32, 32);
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(images.capacity());
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0] as u32);
        images.push(ImageTensor::new(shape, rec[1..].iter().map(|&b| b as f64 / 255.0).collect())?);
    }
    Dataset::with_labels(images, Some(labels))
}

/// Bilinear resampling with corner-aligned grids: output corners map onto
/// input corners.
pub fn resize_bilinear(image: &ImageTensor, height: usize, width: usize) -> Result<ImageTensor> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("resize target must be non-empty"));
    }
    let s = image.shape();
    if (s.height, s.width) == (height, width) {
        return Ok(image.clone());
    }
    let coord = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = dst as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let out_shape = Shape::new(s.channels, height, width);
    let mut out = ImageTensor::zeros(out_shape);
    for c in 0..s.channels {
        for r in 0..height {
            let (y0, y1, fy) = coord(r, s.height, height);
            for col in 0..width {
                let (x0, x1, fx) = coord(col, s.width, width);
                let top = (1.0 - fx) * image.get(c, y0, x0) + fx * image.get(c, y0, x1);
                let bottom = (1.0 - fx) * image.get(c, y1, x0) + fx * image.get(c, y1, x1);
                out.set(c, r, col, (1.0 - fy) * top + fy * bottom);
            }
        }
    }
    Ok(out)
}

pub fn resize_dataset(dataset: &Dataset, height: usize, width: usize) -> Result<Dataset> {
    let images = dataset
        .images
        .iter()
        .map(|im| resize_bilinear(im, height, width))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_labels(images, dataset.labels.clone())
}

/// Consecutive slices of one seeded permutation, each of `⌊f·N⌋` images
/// and kept in source order. `[1.0]` returns the dataset unchanged.
pub fn split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::invalid("fractions must lie in (0, 1]"));
    }
    if fractions.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::invalid("fractions sum to more than 1"));
    }
    let n = dataset.len();
    let perm = seed::permutation(n, seed);
    let mut start = 0;
    let mut parts = Vec::with_capacity(fractions.len());
    for (i, &f) in fractions.iter().enumerate() {
        let k = if f == 1.0 { n } else { (f * n as f64 + 1e-9).floor() as usize };
        if k == 0 {
            return Err(Error::invalid(format!("split part {i} is empty")));
        }
        let mut idx = perm[start..start + k].to_vec();
        idx.sort_unstable();
        parts.push(dataset.select(&idx));
        start += k;
    }
    Ok(parts)
}
