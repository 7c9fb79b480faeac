use crate::error::{Error, Result};
use crate::linalg::{dct2, idct2, svd, Matrix};
use crate::tensor::ImageTensor;

/// Discards the bottom `k` nonzero singular values of every channel, then
/// clamps to `[0, 1]`. `k` at or above a channel's rank zeroes it.
pub fn svd_blur(image: &ImageTensor, k: usize) -> Result<ImageTensor> {
    if k == 0 {
        return Err(Error::invalid("svd_blur needs k >= 1"));
    }
    let channels = (0..image.channels())
        .map(|j| {
            let d = svd(&image.channel_matrix(j))?;
            Ok(d.reconstruct(d.rank().saturating_sub(k)))
        })
        .collect::<Result<Vec<Matrix>>>()?;
    Ok(ImageTensor::from_channels(&channels)?.clamp_unit())
}

/// Keeps the `keep` largest-|coefficient| DCT entries of every channel,
/// ties going to the lower flat index.
pub fn dct_blur(image: &ImageTensor, keep: usize) -> Result<ImageTensor> {
    let plane = image.height() * image.width();
    if keep == 0 || keep > plane {
        return Err(Error::invalid(format!(
            "dct_blur keep must be in 1..={plane}, got {keep}"
        )));
    }
    let channels = (0..image.channels())
        .map(|j| {
            let mut coeffs = dct2(&image.channel_matrix(j))?;
            prune_to_largest(coeffs.as_mut_slice(), keep);
            idct2(&coeffs)
        })
        .collect::<Result<Vec<Matrix>>>()?;
    Ok(ImageTensor::from_channels(&channels)?.clamp_unit())
}

pub(crate) fn prune_to_largest(values: &mut [f64], keep: usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    for &i in &order[keep.min(values.len())..] {
        values[i] = 0.0;
    }
}

/// Standard deviation used for a Gaussian kernel of odd size `k`.
pub fn gaussian_sigma(k: usize) -> f64 {
    0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps of odd length `k`.
pub fn gaussian_kernel_1d(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let sigma = gaussian_sigma(k);
    let c = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let x = i as f64 - c;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mirror index without repeating the edge sample (`..., 2, 1 | 0, 1, 2, ...`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Separable Gaussian blur; `kx` runs along the width, `ky` along the height.
pub fn gaussian_blur(image: &ImageTensor, (kx, ky): (usize, usize)) -> Result<ImageTensor> {
    if kx % 2 == 0 || ky % 2 == 0 {
        return Err(Error::invalid(format!(
            "gaussian kernel sizes must be odd, got ({kx}, {ky})"
        )));
    }
    let (h, w) = (image.height(), image.width());
    let tx = gaussian_kernel_1d(kx);
    let ty = gaussian_kernel_1d(ky);
    let (rx, ry) = ((kx / 2) as isize, (ky / 2) as isize);
    let mut out = image.clone();
    let mut tmp = vec![0.0; h * w];
    for j in 0..image.channels() {
        let src = image.channel(j);
        for r in 0..h {
            for c in 0..w {
                tmp[r * w + c] = tx
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * src[r * w + reflect(c as isize + t as isize - rx, w)])
                    .sum();
            }
        }
        let dst = out.channel_mut(j);
        for r in 0..h {
            for c in 0..w {
                dst[r * w + c] = ty
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * tmp[reflect(r as isize + t as isize - ry, h) * w + c])
                    .sum();
            }
        }
    }
    Ok(out.clamp_unit())
}
