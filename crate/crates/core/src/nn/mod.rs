//! Convolutional networks with reverse-mode gradients and Adam.

mod adam;
mod network;
mod ops;
mod profile;

pub use adam::{adam_step, AdamState};
pub use network::{ForwardTrace, Network};
pub use profile::{Activation, LayerSpec, NetworkProfile, ProfileKind};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Mean squared distance `mean_b ‖f(x_b) − g(x_b)‖²` and its gradient with
/// respect to the predictor parameters.
pub fn loss_and_grad(predictor: &Network, target: &Network, batch: &[&ImageTensor]) -> Result<(f64, Vec<f64>)> {
    if predictor.output_dim() != target.output_dim() {
        return Err(Error::invalid(format!(
            "predictor output {} does not match target output {}",
            predictor.output_dim(),
            target.output_dim()
        )));
    }
    let x = predictor.pack(batch)?;
    let g = target.forward_packed(&target.pack(batch)?, batch.len());
    let (loss, grad) = loss_and_grad_packed(predictor, &x, batch.len(), &g)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "distillation loss",
            index: 0,
        });
    }
    Ok((loss, grad))
}

/// As [`loss_and_grad`] with target features precomputed, `x` packed as
/// `[n, input_len]` and `target_features` as `[n, output_dim]`. The loss is
/// returned even when it is not finite.
pub fn loss_and_grad_packed(
    predictor: &Network,
    x: &[f64],
    n: usize,
    target_features: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if predictor.is_frozen() {
        return Err(Error::invalid("predictor must be trainable"));
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if x.len() != n * predictor.input_len() {
        return Err(Error::shape(n * predictor.input_len(), x.len()));
    }
    if target_features.len() != n * predictor.output_dim() {
        return Err(Error::shape(n * predictor.output_dim(), target_features.len()));
    }
    let trace = predictor.forward_trace(x, n);
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let dout: Vec<f64> = trace
        .output()
        .iter()
        .zip(target_features)
        .map(|(f, g)| {
            let d = f - g;
            loss += d * d;
            2.0 * d * scale
        })
        .collect();
    loss *= scale;
    Ok((loss, predictor.backward(&trace, dout)))
}

/// Per-image squared distances `‖f(x) − g(x)‖²`.
pub fn squared_distances(predictor: &Network, target: &Network, batch: &[&ImageTensor]) -> Result<Vec<f64>> {
    if predictor.output_dim() != target.output_dim() {
        return Err(Error::invalid("predictor and target output dimensions differ"));
    }
    let f = predictor.forward_refs(batch)?;
    let g = target.forward_refs(batch)?;
    let d = predictor.output_dim();
    Ok(f.as_slice()
        .chunks(d)
        .zip(g.as_slice().chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect())
}
