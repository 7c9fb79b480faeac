//! Finite-difference gradient checking shared by the gradient and
//! acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svdrnd::nn::{loss_and_grad, Activation, LayerSpec, Network, NetworkProfile, ProfileKind};
use svdrnd::{ImageTensor, Shape};

pub fn random_image(shape: Shape, rng: &mut ChaCha8Rng) -> ImageTensor {
    ImageTensor::new(shape, (0..shape.len()).map(|_| rng.random::<f64>()).collect()).unwrap()
}

pub fn perturbed(net: &Network, i: usize, delta: f64) -> Network {
    let mut p = net.params().to_vec();
    p[i] += delta;
    Network::from_params(net.profile().clone(), p, false).unwrap()
}

/// Moves every parameter slightly so that no pre-activation sits exactly on
/// a kink, which zero biases over dead regions otherwise produce.
pub fn jittered(net: &Network, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let p = net.params().iter().map(|v| v + 0.05 * (rng.random::<f64>() - 0.5)).collect();
    Network::from_params(net.profile().clone(), p, false).unwrap()
}

pub fn central(pred: &Network, target: &Network, batch: &[&ImageTensor], i: usize, h: f64) -> f64 {
    let (lp, _) = loss_and_grad(&perturbed(pred, i, h), target, batch).unwrap();
    let (lm, _) = loss_and_grad(&perturbed(pred, i, -h), target, batch).unwrap();
    (lp - lm) / (2.0 * h)
}

pub fn close(a: f64, b: f64) -> bool {
    // Rounding in the loss difference sets an absolute floor near 1e-12.
    (a - b).abs() <= 1e-4 * a.abs().max(b.abs()) + 1e-9
}

/// Central differences (h = 1e-4) on every parameter. A coordinate whose
/// ±h interval straddles an activation kink shows that by disagreeing with
/// its own h/10 estimate; such coordinates are compared at h = 1e-6 and may
/// make up at most 5% of the total.
pub fn check_gradient(pred: &Network, target: &Network, batch: &[&ImageTensor]) -> Result<(), String> {
    let all: Vec<usize> = (0..pred.param_count()).collect();
    check_gradient_at(pred, target, batch, &all)
}

/// [`check_gradient`] restricted to `coords`.
pub fn check_gradient_at(pred: &Network, target: &Network, batch: &[&ImageTensor], coords: &[usize]) -> Result<(), String> {
    let h = 1e-4;
    let (_, grad) = loss_and_grad(pred, target, batch).unwrap();
    let mut kinked = 0;
    for &i in coords {
        let g = grad[i];
        let fd = central(pred, target, batch, i, h);
        if close(g, fd) {
            continue;
        }
        let finer = central(pred, target, batch, i, h / 10.0);
        if close(fd, finer) {
            return Err(format!("param {i}: analytic {g}, numeric {fd}"));
        }
        kinked += 1;
        let fine = central(pred, target, batch, i, 1e-6);
        if !close(g, fine) {
            return Err(format!("param {i} near a kink: analytic {g}, numeric {fine}"));
        }
    }
    if kinked * 20 > coords.len() {
        return Err(format!("{kinked} of {} coordinates sit near kinks", coords.len()));
    }
    Ok(())
}

pub fn custom(input: Shape, layers: Vec<LayerSpec>) -> NetworkProfile {
    NetworkProfile {
        kind: ProfileKind::Tiny,
        input,
        layers,
    }
}

/// A random conv (+ optional residual) + dense predictor, a dense target
/// and two input images, all derived from `seed`.
pub fn random_config(seed: u64) -> (Network, Network, Vec<ImageTensor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0f1);
    let channels = rng.random_range(1..3);
    let size = rng.random_range(3..6);
    let width = rng.random_range(1..4);
    let stride = rng.random_range(1..3);
    let act = [Activation::Relu, Activation::LeakyRelu, Activation::None][rng.random_range(0..3)];
    let residual = rng.random::<bool>();
    network_config(channels, size, width, stride, residual, act, seed)
}

pub fn network_config(
    channels: usize,
    size: usize,
    width: usize,
    stride: usize,
    residual: bool,
    act: Activation,
    seed: u64,
) -> (Network, Network, Vec<ImageTensor>) {
    let input = Shape::new(channels, size, size);
    let mut layers = vec![LayerSpec::Conv { in_channels: channels, out_channels: width, kernel: 3, stride, activation: act }];
    let mut side = size.div_ceil(stride);
    let mut feat = width;
    if residual {
        layers.push(LayerSpec::Residual { in_channels: width, out_channels: width + 1, stride, activation: act });
        side = side.div_ceil(stride);
        feat = width + 1;
    }
    layers.push(LayerSpec::Dense { inputs: feat * side * side, outputs: 3, activation: Activation::None });
    let pred = jittered(&Network::init(custom(input, layers), seed, false).unwrap(), seed);
    let tprof = custom(input, vec![LayerSpec::Dense { inputs: input.len(), outputs: 3, activation: Activation::None }]);
    let target = Network::init(tprof, seed + 1, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..2).map(|_| random_image(input, &mut rng)).collect();
    (pred, target, images)
}

/// Convolution, identity and projected residual blocks, and dense layers
/// under every activation.
pub fn every_layer_config() -> (Network, Network, Vec<ImageTensor>) {
    let input = Shape::new(2, 6, 6);
    let pred_profile = custom(
        input,
        vec![
            LayerSpec::Conv { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, activation: Activation::LeakyRelu },
            LayerSpec::Residual { in_channels: 3, out_channels: 3, stride: 1, activation: Activation::Relu },
            LayerSpec::Residual { in_channels: 3, out_channels: 4, stride: 2, activation: Activation::LeakyRelu },
            LayerSpec::Dense { inputs: 36, outputs: 8, activation: Activation::Relu },
            LayerSpec::Dense { inputs: 8, outputs: 5, activation: Activation::None },
        ],
    );
    let target_profile = custom(
        input,
        vec![
            LayerSpec::Conv { in_channels: 2, out_channels: 2, kernel: 3, stride: 2, activation: Activation::LeakyRelu },
            LayerSpec::Dense { inputs: 18, outputs: 5, activation: Activation::None },
        ],
    );
    let pred = jittered(&Network::init(pred_profile, 11, false).unwrap(), 11);
    let target = Network::init(target_profile, 12, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images = (0..3).map(|_| random_image(input, &mut rng)).collect();
    (pred, target, images)
}
