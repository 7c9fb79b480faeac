//! Auxiliary "proxy-OOD" datasets: blurred, geometrically transformed and
//! orthogonally perturbed copies of a training set.

mod blur;
mod geometric;
mod orthogonal;

pub use blur::{dct_blur, gaussian_blur, gaussian_kernel_1d, gaussian_sigma, svd_blur};
pub use geometric::{geometric_transform, CONTRAST_FACTORS};
pub use orthogonal::{orthogonal_perturb, OrthogonalProbeSpec};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Dataset, ImageTensor};

/// Parameter grids accepted without `off_grid`.
pub mod grid {
    /// Discarded singular values, single auxiliary set.
    pub const SVD_K_SINGLE: [usize; 8] = [18, 20, 22, 24, 25, 26, 27, 28];
    /// First and second discard counts for the two-dataset setting.
    pub const SVD_K_PAIR: ([usize; 4], [usize; 4]) = ([8, 10, 12, 14], [22, 24, 26, 28]);
    /// Retained DCT coefficients, single auxiliary dataset.
    pub const DCT_KEEP_SINGLE: [usize; 8] = [4, 8, 12, 14, 16, 20, 24, 28];
    pub const DCT_KEEP_PAIR: ([usize; 4], [usize; 4]) = ([20, 24, 28, 32], [40, 44, 48, 52]);
    pub const GAUSSIAN_KERNEL: [usize; 3] = [1, 3, 5];
    /// Pixel magnitudes for translation and shear.
    pub const SHIFT_MAGNITUDE: [usize; 4] = [4, 8, 12, 16];
    /// Percent of signal norm for the orthogonal probe.
    pub const ORTHOGONAL_ALPHA: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
}

/// Which transform to apply, with its kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    /// Zero the bottom `k` nonzero singular values of every channel.
    SvdBlur { k: usize },
    /// Keep the `keep` largest-magnitude DCT coefficients of every channel.
    DctBlur { keep: usize },
    GaussianBlur { kx: usize, ky: usize },
    Flip,
    Rotate,
    TranslateV { magnitude: usize },
    TranslateH { magnitude: usize },
    ShearV { magnitude: usize },
    ShearH { magnitude: usize },
    Contrast,
    Invert,
    OrthogonalNoise { alpha: f64, seed: u64 },
}

/// One auxiliary-dataset recipe. Parameters outside the reference grids are
/// rejected unless `off_grid` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(flatten)]
    pub degradation: Degradation,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub off_grid: bool,
}

impl From<Degradation> for DegradationSpec {
    fn from(degradation: Degradation) -> Self {
        DegradationSpec {
            degradation,
            off_grid: false,
        }
    }
}

impl DegradationSpec {
    pub fn new(degradation: Degradation) -> Self {
        degradation.into()
    }

    pub fn off_grid(degradation: Degradation) -> Self {
        DegradationSpec {
            degradation,
            off_grid: true,
        }
    }

    pub fn svd_blur(k: usize) -> Self {
        Self::off_grid(Degradation::SvdBlur { k })
    }

    pub fn name(&self) -> &'static str {
        match self.degradation {
            Degradation::SvdBlur { .. } => "svd_blur",
            Degradation::DctBlur { .. } => "dct_blur",
            Degradation::GaussianBlur { .. } => "gaussian_blur",
            Degradation::Flip => "flip",
            Degradation::Rotate => "rotate",
            Degradation::TranslateV { .. } => "translate_v",
            Degradation::TranslateH { .. } => "translate_h",
            Degradation::ShearV { .. } => "shear_v",
            Degradation::ShearH { .. } => "shear_h",
            Degradation::Contrast => "contrast",
            Degradation::Invert => "invert",
            Degradation::OrthogonalNoise { .. } => "orthogonal_noise",
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(
            self.degradation,
            Degradation::Flip
                | Degradation::Rotate
                | Degradation::TranslateV { .. }
                | Degradation::TranslateH { .. }
                | Degradation::ShearV { .. }
                | Degradation::ShearH { .. }
                | Degradation::Contrast
                | Degradation::Invert
        )
    }

    /// Output images produced per source image.
    pub fn variant_count(&self) -> usize {
        match self.degradation {
            Degradation::Rotate | Degradation::Contrast => 3,
            Degradation::TranslateV { .. }
            | Degradation::TranslateH { .. }
            | Degradation::ShearV { .. }
            | Degradation::ShearH { .. } => 2,
            _ => 1,
        }
    }

    /// Whether every parameter lies on one of the reference grids.
    pub fn on_grid(&self) -> bool {
        match self.degradation {
            Degradation::SvdBlur { k } => {
                grid::SVD_K_SINGLE.contains(&k)
                    || grid::SVD_K_PAIR.0.contains(&k)
                    || grid::SVD_K_PAIR.1.contains(&k)
            }
            Degradation::DctBlur { keep } => {
                grid::DCT_KEEP_SINGLE.contains(&keep)
                    || grid::DCT_KEEP_PAIR.0.contains(&keep)
                    || grid::DCT_KEEP_PAIR.1.contains(&keep)
            }
            Degradation::GaussianBlur { kx, ky } => {
                grid::GAUSSIAN_KERNEL.contains(&kx) && grid::GAUSSIAN_KERNEL.contains(&ky)
            }
            Degradation::TranslateV { magnitude }
            | Degradation::TranslateH { magnitude }
            | Degradation::ShearV { magnitude }
            | Degradation::ShearH { magnitude } => grid::SHIFT_MAGNITUDE.contains(&magnitude),
            Degradation::OrthogonalNoise { alpha, .. } => grid::ORTHOGONAL_ALPHA.contains(&alpha),
            Degradation::Flip | Degradation::Rotate | Degradation::Contrast | Degradation::Invert => {
                true
            }
        }
    }

    /// Checks hard preconditions, then grid membership unless flagged.
    pub fn validate(&self) -> Result<()> {
        match self.degradation {
            Degradation::SvdBlur { k } if k == 0 => {
                return Err(Error::invalid("svd_blur needs k >= 1"))
            }
            Degradation::DctBlur { keep } if keep == 0 => {
                return Err(Error::invalid("dct_blur needs keep >= 1"))
            }
            Degradation::GaussianBlur { kx, ky } => {
                if kx % 2 == 0 || ky % 2 == 0 {
                    return Err(Error::invalid(format!(
                        "gaussian kernel sizes must be odd, got ({kx}, {ky})"
                    )));
                }
                if !grid::GAUSSIAN_KERNEL.contains(&kx) || !grid::GAUSSIAN_KERNEL.contains(&ky) {
                    return Err(Error::invalid(format!(
                        "gaussian kernel sizes must be in {{1,3,5}}, got ({kx}, {ky})"
                    )));
                }
            }
            Degradation::TranslateV { magnitude }
            | Degradation::TranslateH { magnitude }
            | Degradation::ShearV { magnitude }
            | Degradation::ShearH { magnitude }
                if magnitude == 0 =>
            {
                return Err(Error::invalid("shift magnitude must be >= 1"))
            }
            Degradation::OrthogonalNoise { alpha, .. } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(Error::invalid(format!("orthogonal alpha must be > 0, got {alpha}")))
            }
            _ => {}
        }
        if !self.off_grid && !self.on_grid() {
            return Err(Error::invalid(format!(
                "{:?} is outside the reference grid; set off_grid = true to allow it",
                self.degradation
            )));
        }
        Ok(())
    }

    /// Applies the transform to one image. `index` feeds the per-image seed
    /// of the orthogonal kind and is ignored otherwise.
    pub fn apply(&self, image: &ImageTensor, index: usize) -> Result<Vec<ImageTensor>> {
        match self.degradation {
            Degradation::SvdBlur { k } => Ok(vec![svd_blur(image, k)?]),
            Degradation::DctBlur { keep } => Ok(vec![dct_blur(image, keep)?]),
            Degradation::GaussianBlur { kx, ky } => Ok(vec![gaussian_blur(image, (kx, ky))?]),
            Degradation::OrthogonalNoise { alpha, seed } => {
                let spec = OrthogonalProbeSpec {
                    alpha,
                    seed: seed::derive(seed, index as u64),
                };
                Ok(vec![orthogonal_perturb(image, &spec)?])
            }
            _ => geometric_transform(image, &self.degradation),
        }
    }
}

/// Derives one dataset per spec from `dataset`, preserving source order.
/// Multi-variant geometric kinds emit all variants of image 0, then all of
/// image 1, and so on.
pub fn build_aux_datasets(dataset: &Dataset, specs: &[DegradationSpec]) -> Result<Vec<Dataset>> {
    if specs.is_empty() {
        return Err(Error::invalid("no degradation specs given"));
    }
    specs.iter().map(|s| s.validate()).collect::<Result<()>>()?;
    specs
        .iter()
        .map(|spec| apply_to_dataset(dataset, spec))
        .collect()
}

pub fn apply_to_dataset(dataset: &Dataset, spec: &DegradationSpec) -> Result<Dataset> {
    let per_image: Vec<Vec<ImageTensor>> = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, im)| spec.apply(im, i).map_err(|e| Error::at_image(i, e)))
        .collect::<Result<_>>()?;
    let variants = spec.variant_count();
    let labels = dataset.labels.as_ref().map(|l| {
        l.iter()
            .flat_map(|&y| std::iter::repeat_n(y, variants))
            .collect()
    });
    Dataset::with_labels(per_image.into_iter().flatten().collect(), labels)
}
