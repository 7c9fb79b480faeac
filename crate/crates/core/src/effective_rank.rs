//! Log effective rank of images and datasets, and validation-free selection
//! of SVD blur strengths whose blurred-dataset LERs are equally spaced
//! between half and all of the training LER.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{shannon_entropy_bits, singular_values, svd};
use crate::tensor::{Dataset, ImageTensor};

/// How per-channel spectra combine into one image LER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelAggregation {
    /// `log₂(mean_j 2^{LER_j})`: average the effective ranks, then take logs.
    #[default]
    MeanEffectiveRank,
    /// `mean_j LER_j`.
    MeanLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRankReport {
    pub per_channel_ler: Vec<f64>,
    pub image_ler: f64,
    pub effective_rank: f64,
    /// Channels with no nonzero singular value; their LER is reported as 0.
    pub zero_channels: Vec<usize>,
}

fn channel_ler(values: &[f64]) -> Result<Option<f64>> {
    if values.is_empty() {
        return Ok(None);
    }
    shannon_entropy_bits(values).map(Some)
}

fn aggregate(per_channel: &[f64], agg: ChannelAggregation) -> f64 {
    let n = per_channel.len() as f64;
    match agg {
        ChannelAggregation::MeanEffectiveRank => {
            (per_channel.iter().map(|l| l.exp2()).sum::<f64>() / n).log2()
        }
        ChannelAggregation::MeanLog => per_channel.iter().sum::<f64>() / n,
    }
}

fn report_from_spectra(spectra: &[Vec<f64>], agg: ChannelAggregation) -> Result<EffectiveRankReport> {
    let mut per_channel_ler = Vec::with_capacity(spectra.len());
    let mut zero_channels = Vec::new();
    for (j, s) in spectra.iter().enumerate() {
        match channel_ler(s)? {
            Some(l) => per_channel_ler.push(l),
            None => {
                zero_channels.push(j);
                per_channel_ler.push(0.0);
            }
        }
    }
    let image_ler = aggregate(&per_channel_ler, agg);
    Ok(EffectiveRankReport {
        per_channel_ler,
        image_ler,
        effective_rank: image_ler.exp2(),
        zero_channels,
    })
}

pub fn image_ler(image: &ImageTensor) -> Result<EffectiveRankReport> {
    image_ler_with(image, ChannelAggregation::default())
}

pub fn image_ler_with(image: &ImageTensor, agg: ChannelAggregation) -> Result<EffectiveRankReport> {
    let spectra = (0..image.channels())
        .map(|j| singular_values(&image.channel_matrix(j)))
        .collect::<Result<Vec<_>>>()?;
    report_from_spectra(&spectra, agg)
}

/// Mean image LER over the dataset.
pub fn dataset_ler(dataset: &Dataset) -> Result<f64> {
    dataset_ler_with(dataset, ChannelAggregation::default())
}

pub fn dataset_ler_with(dataset: &Dataset, agg: ChannelAggregation) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("effective rank of an empty dataset"));
    }
    let lers = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            image_ler_with(im, agg)
                .map(|r| r.image_ler)
                .map_err(|e| Error::at_image(i, e))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(lers.iter().sum::<f64>() / lers.len() as f64)
}

/// `LER_i = (0.5 + 0.5·(i−1)/b)·ler_train` for `i = 1..=b`.
pub fn uniform_targets(ler_train: f64, b_train: usize) -> Result<Vec<f64>> {
    if b_train == 0 {
        return Err(Error::invalid("uniform targets need b_train >= 1"));
    }
    if !(ler_train > 0.0 && ler_train.is_finite()) {
        return Err(Error::invalid(format!(
            "training LER must be positive, got {ler_train}"
        )));
    }
    Ok((1..=b_train)
        .map(|i| (0.5 + 0.5 * (i - 1) as f64 / b_train as f64) * ler_train)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub b_train: usize,
    pub train_ler: f64,
    pub targets: Vec<f64>,
    pub chosen_k: Vec<usize>,
    /// Mean blurred LER at each chosen K.
    pub achieved_ler: Vec<f64>,
    /// `(K, mean blurred LER)` for every candidate K.
    pub sweep: Vec<(usize, f64)>,
    /// Set when the blurred LER does not vary with K (e.g. rank-1 data), so
    /// the choice carries no information.
    pub zero_spread: bool,
}

/// Mean LER of the K-blurred dataset for every K in `candidates`.
///
/// Each image is decomposed once per channel; the blurred copy for every K
/// is rebuilt from that decomposition exactly as [`svd_blur`] would build it.
///
/// [`svd_blur`]: crate::degradations::svd_blur
pub fn blurred_ler_curve(
    dataset: &Dataset,
    candidates: &[usize],
    agg: ChannelAggregation,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::invalid("effective rank of an empty dataset"));
    }
    let per_image = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, im)| image_blur_curve(im, candidates, agg).map_err(|e| Error::at_image(i, e)))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let n = per_image.len() as f64;
    Ok((0..candidates.len())
        .map(|c| per_image.iter().map(|row| row[c]).sum::<f64>() / n)
        .collect())
}

fn image_blur_curve(
    image: &ImageTensor,
    candidates: &[usize],
    agg: ChannelAggregation,
) -> Result<Vec<f64>> {
    let decomps = (0..image.channels())
        .map(|j| svd(&image.channel_matrix(j)))
        .collect::<Result<Vec<_>>>()?;
    candidates
        .iter()
        .map(|&k| {
            let spectra = decomps
                .iter()
                .map(|d| {
                    let mut m = d.reconstruct(d.rank().saturating_sub(k));
                    for v in m.as_mut_slice() {
                        *v = v.clamp(0.0, 1.0);
                    }
                    singular_values(&m)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(report_from_spectra(&spectra, agg)?.image_ler)
        })
        .collect()
}

pub fn select_k(dataset: &Dataset, b_train: usize) -> Result<KSelection> {
    select_k_with(dataset, b_train, ChannelAggregation::default())
}

/// For each uniform target, the K in `1..min(H, W)` whose blurred-dataset
/// mean LER is closest, ties going to the smaller K.
pub fn select_k_with(
    dataset: &Dataset,
    b_train: usize,
    agg: ChannelAggregation,
) -> Result<KSelection> {
    if b_train == 0 {
        return Err(Error::invalid("select_k needs b_train >= 1"));
    }
    let shape = dataset
        .shape()
        .ok_or_else(|| Error::invalid("select_k on an empty dataset"))?;
    let max_k = shape.height.min(shape.width);
    if max_k < 2 {
        return Err(Error::invalid(format!(
            "no candidate K for {}x{} images",
            shape.height, shape.width
        )));
    }
    let candidates: Vec<usize> = (1..max_k).collect();
    let train_ler = dataset_ler_with(dataset, agg)?;
    let curve = blurred_ler_curve(dataset, &candidates, agg)?;

    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zero_spread = hi - lo <= 1e-12 || train_ler <= 0.0;
    let targets = if train_ler > 0.0 {
        uniform_targets(train_ler, b_train)?
    } else {
        vec![0.0; b_train]
    };

    let mut chosen_k = Vec::with_capacity(b_train);
    let mut achieved_ler = Vec::with_capacity(b_train);
    for &t in &targets {
        let mut best = 0;
        for c in 1..curve.len() {
            if (curve[c] - t).abs() < (curve[best] - t).abs() {
                best = c;
            }
        }
        chosen_k.push(candidates[best]);
        achieved_ler.push(curve[best]);
    }
    Ok(KSelection {
        b_train,
        train_ler,
        targets,
        chosen_k,
        achieved_ler,
        sweep: candidates.into_iter().zip(curve).collect(),
        zero_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradations::svd_blur;
    use crate::linalg::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_channel(values: &[f64], n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    fn smooth_corpus(n: usize, size: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images = (0..n)
            .map(|_| {
                let chans: Vec<Matrix> = (0..2)
                    .map(|_| {
                        let (a, b, p) = (
                            rng.random_range(0.5..3.0),
                            rng.random_range(0.5..3.0),
                            rng.random_range(0.0..6.0),
                        );
                        let noise: Vec<f64> =
                            (0..size * size).map(|_| rng.random_range(-0.05..0.05)).collect();
                        Matrix::from_fn(size, size, |r, c| {
                            let x = r as f64 / size as f64;
                            let y = c as f64 / size as f64;
                            (0.5 + 0.3 * (a * x * 6.0 + p).sin() * (b * y * 6.0).cos()
                                + noise[r * size + c])
                                .clamp(0.0, 1.0)
                        })
                    })
                    .collect();
                ImageTensor::from_channels(&chans).unwrap()
            })
            .collect();
        Dataset::new(images).unwrap()
    }

    #[test]
    fn uniform_spectrum_and_point_mass() {
        let img = ImageTensor::from_channels(&[diag_channel(&[0.5; 4], 6)]).unwrap();
        let r = image_ler(&img).unwrap();
        assert!((r.per_channel_ler[0] - 2.0).abs() < 1e-12);
        assert!((r.effective_rank - 4.0).abs() < 1e-9);

        let rank1 = ImageTensor::from_channels(&[Matrix::outer(&[0.2, 0.4, 0.1], &[1.0, 0.5, 0.3])])
            .unwrap();
        let r = image_ler(&rank1).unwrap();
        assert!(r.image_ler.abs() < 1e-12);
        assert!((r.effective_rank - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_mean_rule() {
        // Effective ranks 2 and 8: mean 5, LER log₂ 5.
        let img = ImageTensor::from_channels(&[
            diag_channel(&[0.3; 2], 8),
            diag_channel(&[0.1; 8], 8),
        ])
        .unwrap();
        let r = image_ler(&img).unwrap();
        assert!((r.effective_rank - 5.0).abs() < 1e-9);
        assert!((r.image_ler - 5f64.log2()).abs() < 1e-9);
        assert!((r.image_ler - 2.321_928_094_887_362).abs() < 1e-9);
        let alt = image_ler_with(&img, ChannelAggregation::MeanLog).unwrap();
        assert!((alt.image_ler - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_channel_is_flagged() {
        let img = ImageTensor::from_channels(&[diag_channel(&[0.3; 2], 4), Matrix::zeros(4, 4)])
            .unwrap();
        let r = image_ler(&img).unwrap();
        assert_eq!(r.zero_channels, vec![1]);
        assert_eq!(r.per_channel_ler[1], 0.0);
    }

    #[test]
    fn dataset_mean() {
        let a = ImageTensor::from_channels(&[diag_channel(&[0.2; 4], 4)]).unwrap();
        let same = Dataset::new(vec![a.clone(), a.clone()]).unwrap();
        assert!((dataset_ler(&same).unwrap() - image_ler(&a).unwrap().image_ler).abs() < 1e-12);
        let c = ImageTensor::from_channels(&[diag_channel(&[0.2; 16], 16)]).unwrap();
        let d = ImageTensor::from_channels(&[diag_channel(&[0.2; 4], 16)]).unwrap();
        assert!((dataset_ler(&Dataset::new(vec![c, d]).unwrap()).unwrap() - 3.0).abs() < 1e-12);
        assert!(dataset_ler(&Dataset::new(vec![]).unwrap()).is_err());
    }

    #[test]
    fn dataset_ler_matches_image_by_image_recomputation() {
        let d = smooth_corpus(12, 10, 4);
        let mut total = 0.0;
        for im in &d.images {
            let mut er = 0.0;
            for j in 0..im.channels() {
                let s = singular_values(&im.channel_matrix(j)).unwrap();
                let sum: f64 = s.iter().sum();
                let h: f64 = s.iter().map(|x| -(x / sum) * (x / sum).log2()).sum();
                er += h.exp2();
            }
            total += (er / im.channels() as f64).log2();
        }
        let expected = total / d.len() as f64;
        assert!((dataset_ler(&d).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn uniform_target_values() {
        assert_eq!(uniform_targets(4.0, 1).unwrap(), vec![2.0]);
        assert_eq!(uniform_targets(4.0, 2).unwrap(), vec![2.0, 3.0]);
        assert_eq!(uniform_targets(4.0, 4).unwrap(), vec![2.0, 2.5, 3.0, 3.5]);
        assert!(uniform_targets(4.0, 0).is_err());
        assert!(uniform_targets(0.0, 2).is_err());
    }

    #[test]
    fn curve_matches_explicit_blurring() {
        let d = smooth_corpus(6, 8, 1);
        let ks: Vec<usize> = (1..8).collect();
        let curve = blurred_ler_curve(&d, &ks, ChannelAggregation::MeanEffectiveRank).unwrap();
        for (c, &k) in ks.iter().enumerate() {
            let blurred = Dataset::new(d.images.iter().map(|im| svd_blur(im, k).unwrap()).collect())
                .unwrap();
            assert!((dataset_ler(&blurred).unwrap() - curve[c]).abs() < 1e-9);
        }
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn select_k_matches_brute_force() {
        let d = smooth_corpus(8, 12, 9);
        let sel = select_k(&d, 2).unwrap();
        let train = dataset_ler(&d).unwrap();
        for (i, target) in [0.5 * train, 0.75 * train].iter().enumerate() {
            let mut best = (usize::MAX, f64::INFINITY);
            for k in 1..12 {
                let blurred =
                    Dataset::new(d.images.iter().map(|im| svd_blur(im, k).unwrap()).collect())
                        .unwrap();
                let gap = (dataset_ler(&blurred).unwrap() - target).abs();
                if gap < best.1 {
                    best = (k, gap);
                }
            }
            assert_eq!(sel.chosen_k[i], best.0);
        }
        assert!(sel.chosen_k[0] >= sel.chosen_k[1]);
        assert!(!sel.zero_spread);
    }

    #[test]
    fn rank_one_dataset_is_degenerate() {
        let im = ImageTensor::from_channels(&[Matrix::outer(&[0.2, 0.4, 0.1, 0.3], &[1.0, 0.5, 0.3, 0.6])])
            .unwrap();
        let sel = select_k(&Dataset::new(vec![im.clone(), im]).unwrap(), 1).unwrap();
        assert!(sel.zero_spread);
        assert_eq!(sel.chosen_k, vec![1]);
    }

    #[test]
    fn scale_invariance() {
        let d = smooth_corpus(1, 8, 2);
        let im = &d.images[0];
        let scaled = ImageTensor::new(im.shape(), im.as_slice().iter().map(|v| v * 0.37).collect())
            .unwrap();
        assert!((image_ler(im).unwrap().image_ler - image_ler(&scaled).unwrap().image_ler).abs() < 1e-9);
    }

    #[test]
    fn effective_rank_bounded_by_numerical_rank() {
        let d = smooth_corpus(5, 9, 3);
        for im in &d.images {
            let r = image_ler(im).unwrap();
            for j in 0..im.channels() {
                let n = singular_values(&im.channel_matrix(j)).unwrap().len();
                assert!(r.per_channel_ler[j].exp2() <= n as f64 + 1e-9);
            }
            assert!(r.effective_rank >= 1.0 - 1e-12 && r.effective_rank <= 9.0 + 1e-9);
        }
    }
}
