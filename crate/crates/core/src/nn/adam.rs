use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One in-place Adam update. Nothing changes when an error is returned.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(params.len(), (grads.len(), state.m.len(), state.v.len())));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.0; 4];
        let g = [100.0, -50.0, 1e3, -7.0];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &g, &mut s, 1e-4).unwrap();
        for (x, gi) in p.iter().zip(g) {
            assert_eq!(x.signum(), -gi.signum());
            assert!((x.abs() - 1e-4).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[1.0, f64::NAN], &mut s, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1 }));
        assert_eq!(s.step, 0);
        assert!(adam_step(&mut p, &[1.0], &mut s, 1e-3).is_err());
    }

    #[test]
    fn trajectories_repeat_exactly() {
        let run = || {
            let mut p = vec![0.3, -0.1];
            let mut s = AdamState::new(2);
            for i in 0..20 {
                let g = [p[0] * 2.0 + i as f64, p[1].sin()];
                adam_step(&mut p, &g, &mut s, 1e-2).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
