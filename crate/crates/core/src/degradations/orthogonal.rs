use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::ImageTensor;

/// Gaussian perturbation orthogonal to the image, scaled to `alpha` percent
/// of the image norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalProbeSpec {
    pub alpha: f64,
    pub seed: u64,
}

/// Returns `x + δ` with `δ ⟂ x` and `‖δ‖ = (alpha/100)·‖x‖`. The output is
/// not clamped.
pub fn orthogonal_perturb(image: &ImageTensor, spec: &OrthogonalProbeSpec) -> Result<ImageTensor> {
    if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "orthogonal alpha must be > 0, got {}",
            spec.alpha
        )));
    }
    let x = image.as_slice();
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return Err(Error::invalid("cannot perturb orthogonally to a zero image"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("a single-pixel image has no orthogonal complement"));
    }
    let target = spec.alpha / 100.0 * xx.sqrt();
    let mut s = spec.seed;
    loop {
        let mut rng = seed::rng(s);
        let mut z: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let znorm = norm(&z);
        project_out(&mut z, x, xx);
        // A second pass removes the rounding residue of the first.
        project_out(&mut z, x, xx);
        let n = norm(&z);
        if n >= 1e-12 * znorm && n > 0.0 {
            let scale = target / n;
            let data = x.iter().zip(&z).map(|(a, b)| a + scale * b).collect();
            return ImageTensor::new(image.shape(), data);
        }
        s = s.wrapping_add(1);
    }
}

fn project_out(z: &mut [f64], x: &[f64], xx: f64) {
    let zx: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum();
    let c = zx / xx;
    for (a, b) in z.iter_mut().zip(x) {
        *a -= c * b;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
