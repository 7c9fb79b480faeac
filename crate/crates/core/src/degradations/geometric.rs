use super::Degradation;
use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Scale factors applied to pixel deviations from the channel mean.
pub const CONTRAST_FACTORS: [f64; 3] = [0.5, 0.25, 0.125];

/// All variants of one geometric transform. Pixels shifted in from outside
/// the frame are zero.
pub fn geometric_transform(image: &ImageTensor, kind: &Degradation) -> Result<Vec<ImageTensor>> {
    let out = match *kind {
        Degradation::Flip => vec![remap(image, |r, c, _, w| Some((r, w - 1 - c)))],
        Degradation::Rotate => {
            if image.height() != image.width() {
                return Err(Error::invalid(format!(
                    "rotation needs a square image, got {}x{}",
                    image.height(),
                    image.width()
                )));
            }
            let r90 = rotate90(image);
            let r180 = rotate90(&r90);
            let r270 = rotate90(&r180);
            vec![r90, r180, r270]
        }
        Degradation::TranslateV { magnitude } => signed(magnitude)
            .map(|d| remap(image, |r, c, h, _| offset(r, -d, h).map(|r| (r, c))))
            .collect(),
        Degradation::TranslateH { magnitude } => signed(magnitude)
            .map(|d| remap(image, |r, c, _, w| offset(c, -d, w).map(|c| (r, c))))
            .collect(),
        Degradation::ShearH { magnitude } => signed(magnitude)
            .map(|d| {
                let slope = d as f64 / image.height() as f64;
                remap(image, move |r, c, h, w| {
                    let shift = (slope * (r as f64 - (h as f64 - 1.0) / 2.0)).round() as isize;
                    offset(c, -shift, w).map(|c| (r, c))
                })
            })
            .collect(),
        Degradation::ShearV { magnitude } => signed(magnitude)
            .map(|d| {
                let slope = d as f64 / image.width() as f64;
                remap(image, move |r, c, h, w| {
                    let shift = (slope * (c as f64 - (w as f64 - 1.0) / 2.0)).round() as isize;
                    offset(r, -shift, h).map(|r| (r, c))
                })
            })
            .collect(),
        Degradation::Contrast => CONTRAST_FACTORS
            .iter()
            .map(|&f| contrast(image, f))
            .collect(),
        Degradation::Invert => {
            let mut out = image.clone();
            for v in out.as_mut_slice() {
                *v = 1.0 - *v;
            }
            vec![out]
        }
        ref other => {
            return Err(Error::invalid(format!(
                "{other:?} is not a geometric transform"
            )))
        }
    };
    Ok(out)
}

fn signed(magnitude: usize) -> impl Iterator<Item = isize> {
    let m = magnitude as isize;
    [m, -m].into_iter()
}

fn offset(i: usize, d: isize, n: usize) -> Option<usize> {
    let j = i as isize + d;
    (0..n as isize).contains(&j).then_some(j as usize)
}

/// Builds an image whose pixel (r, c) reads source pixel `src(r, c)`, or 0
/// where `src` returns `None`. The map is shared by all channels.
fn remap(
    image: &ImageTensor,
    src: impl Fn(usize, usize, usize, usize) -> Option<(usize, usize)>,
) -> ImageTensor {
    let (h, w) = (image.height(), image.width());
    let mut out = ImageTensor::zeros(image.shape());
    for r in 0..h {
        for c in 0..w {
            if let Some((sr, sc)) = src(r, c, h, w) {
                for j in 0..image.channels() {
                    out.set(j, r, c, image.get(j, sr, sc));
                }
            }
        }
    }
    out
}

/// 90° counter-clockwise.
fn rotate90(image: &ImageTensor) -> ImageTensor {
    remap(image, |r, c, _, w| Some((c, w - 1 - r)))
}

fn contrast(image: &ImageTensor, factor: f64) -> ImageTensor {
    let mut out = image.clone();
    for j in 0..image.channels() {
        let ch = out.channel_mut(j);
        let mean = ch.iter().sum::<f64>() / ch.len() as f64;
        for v in ch.iter_mut() {
            *v = mean + factor * (*v - mean);
        }
    }
    out
}
