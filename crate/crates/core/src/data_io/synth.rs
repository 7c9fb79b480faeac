use rand::Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, DatasetRole, DatasetSource};
use crate::effective_rank::dataset_ler;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Dataset, ImageTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Sums of a few low-frequency plane waves.
    SmoothTextures,
    Checker,
    /// Gaussian bumps on a flat background.
    Blobs,
    /// Independent uniform pixels.
    HighfreqNoise,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::SmoothTextures => "smooth_textures",
            SynthKind::Checker => "checker",
            SynthKind::Blobs => "blobs",
            SynthKind::HighfreqNoise => "highfreq_noise",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth_textures" => Ok(SynthKind::SmoothTextures),
            "checker" => Ok(SynthKind::Checker),
            "blobs" => Ok(SynthKind::Blobs),
            "highfreq_noise" => Ok(SynthKind::HighfreqNoise),
            other => Err(Error::invalid(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

const WAVES: usize = 6;
const MAX_FREQ: i32 = 3;

fn smooth(shape: Shape, rng: &mut impl Rng) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let (h, w) = (shape.height as f64, shape.width as f64);
    let waves: Vec<(f64, f64, f64, f64)> = (0..WAVES)
        .map(|_| {
            let fy = rng.random_range(0..=MAX_FREQ) as f64;
            let fx = rng.random_range(-MAX_FREQ..=MAX_FREQ) as f64;
            (fy, fx, rng.random_range(0.0..tau), rng.random_range(0.2..1.0))
        })
        .collect();
    let mut out = Vec::with_capacity(shape.len());
    for _ in 0..shape.channels {
        // Channels share the waves with their own gains, like colour planes.
        let gains: Vec<f64> = (0..WAVES).map(|_| rng.random_range(0.5..1.5)).collect();
        let plane: Vec<f64> = (0..shape.height)
            .flat_map(|r| (0..shape.width).map(move |c| (r as f64, c as f64)))
            .map(|(r, c)| {
                waves
                    .iter()
                    .zip(&gains)
                    .map(|(&(fy, fx, ph, a), g)| g * a * (tau * (fy * r / h + fx * c / w) + ph).cos())
                    .sum::<f64>()
            })
            .collect();
        let peak = plane.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        out.extend(plane.iter().map(|v| 0.5 + 0.45 * v / peak));
    }
    out
}

fn checker(shape: Shape, rng: &mut impl Rng) -> Vec<f64> {
    let cell = rng.random_range(2..=8usize);
    let (oy, ox) = (rng.random_range(0..cell), rng.random_range(0..cell));
    let mut out = Vec::with_capacity(shape.len());
    for _ in 0..shape.channels {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        for r in 0..shape.height {
            for c in 0..shape.width {
                let odd = ((r + oy) / cell + (c + ox) / cell) % 2 == 1;
                out.push(if odd { a } else { b });
            }
        }
    }
    out
}

fn blobs(shape: Shape, rng: &mut impl Rng) -> Vec<f64> {
    let count = rng.random_range(1..=4);
    let (h, w) = (shape.height as f64, shape.width as f64);
    let bumps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let scale = h.min(w);
            (
                rng.random_range(0.0..h),
                rng.random_range(0.0..w),
                rng.random_range(0.08 * scale..0.25 * scale).max(0.5),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(shape.len());
    for _ in 0..shape.channels {
        let background: f64 = rng.random_range(0.0..0.5);
        let colours: Vec<f64> = (0..count).map(|_| rng.random_range(-0.5..1.0)).collect();
        for r in 0..shape.height {
            for c in 0..shape.width {
                let v = bumps.iter().zip(&colours).fold(background, |acc, (&(cy, cx, s), &col)| {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    acc + col * (-d2 / (2.0 * s * s)).exp()
                });
                out.push(v.clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Deterministic corpus of `n` images; image `i` draws from its own stream
/// of `seed`. Pixel values are rounded through `f32` so that a 32-bit
/// container stores them exactly.
pub fn synth_generate(kind: SynthKind, n: usize, shape: Shape, seed: u64) -> Result<(Dataset, DatasetManifest)> {
    if n == 0 {
        return Err(Error::invalid("synthetic corpus needs n >= 1"));
    }
    if shape.is_empty() {
        return Err(Error::invalid("synthetic shape must be non-empty"));
    }
    let images = (0..n)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let raw = match kind {
                SynthKind::SmoothTextures => smooth(shape, &mut rng),
                SynthKind::Checker => checker(shape, &mut rng),
                SynthKind::Blobs => blobs(shape, &mut rng),
                SynthKind::HighfreqNoise => (0..shape.len()).map(|_| rng.random::<f64>()).collect(),
            };
            ImageTensor::new(shape, raw.into_iter().map(|v| v as f32 as f64).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(images)?;
    let manifest = DatasetManifest {
        name: format!("{}_{n}_{seed}", kind.name()),
        role: DatasetRole::Train,
        count: n,
        shape: Some(shape),
        seed,
        source: DatasetSource::Synthetic { generator: kind },
        mean_ler: Some(dataset_ler(&dataset)?),
        resize: None,
    };
    Ok((dataset, manifest))
}
