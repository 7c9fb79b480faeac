#[path = "support/gradients.rs"]
#[allow(dead_code)]
mod gradients;

use gradients::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svdrnd::nn::{loss_and_grad, Activation, LayerSpec, Network, NetworkProfile};
use svdrnd::{ImageTensor, Shape};

#[test]
fn gradient_matches_finite_differences_for_every_layer_type() {
    let (pred, target, images) = every_layer_config();
    assert!(pred.param_count() <= 2000, "{}", pred.param_count());
    let refs: Vec<&ImageTensor> = images.iter().collect();
    check_gradient(&pred, &target, &refs).unwrap();
}

#[test]
fn tiny_profile_gradient_on_small_input() {
    let input = Shape::new(1, 4, 4);
    let mut prof = NetworkProfile::tiny_predictor(input);
    // Narrow the stack to stay under 2k parameters.
    prof.layers = vec![
        LayerSpec::Conv { in_channels: 1, out_channels: 4, kernel: 3, stride: 2, activation: Activation::LeakyRelu },
        LayerSpec::Conv { in_channels: 4, out_channels: 4, kernel: 3, stride: 2, activation: Activation::LeakyRelu },
        LayerSpec::Conv { in_channels: 4, out_channels: 4, kernel: 3, stride: 2, activation: Activation::LeakyRelu },
        LayerSpec::Dense { inputs: 4, outputs: 16, activation: Activation::None },
        LayerSpec::Dense { inputs: 16, outputs: 16, activation: Activation::Relu },
        LayerSpec::Dense { inputs: 16, outputs: 8, activation: Activation::None },
    ];
    let mut tprof = prof.clone();
    tprof.layers.truncate(3);
    tprof.layers.push(LayerSpec::Dense { inputs: 4, outputs: 8, activation: Activation::None });
    let pred = jittered(&Network::init(prof, 1, false).unwrap(), 1);
    let target = Network::init(tprof, 2, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let images: Vec<ImageTensor> = (0..2).map(|_| random_image(input, &mut rng)).collect();
    let refs: Vec<&ImageTensor> = images.iter().collect();
    check_gradient(&pred, &target, &refs).unwrap();
}

#[test]
fn copy_of_target_has_zero_loss_and_gradient() {
    let input = Shape::new(3, 8, 8);
    let target = Network::init(NetworkProfile::tiny_target(input), 4, true).unwrap();
    let pred = target.trainable_copy();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let images: Vec<ImageTensor> = (0..4).map(|_| random_image(input, &mut rng)).collect();
    let refs: Vec<&ImageTensor> = images.iter().collect();
    let (loss, grad) = loss_and_grad(&pred, &target, &refs).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn unit_offset_gives_unit_loss() {
    let input = Shape::new(1, 1, 1);
    let prof = custom(input, vec![LayerSpec::Dense { inputs: 1, outputs: 2, activation: Activation::None }]);
    // weights [0, 0], biases [1, 0]
    let pred = Network::from_params(prof.clone(), vec![0.0, 0.0, 1.0, 0.0], false).unwrap();
    let target = Network::from_params(prof, vec![0.0; 4], true).unwrap();
    let x = ImageTensor::filled(input, 0.5);
    let (loss, _) = loss_and_grad(&pred, &target, &[&x]).unwrap();
    assert_eq!(loss, 1.0);
}

#[test]
fn mismatched_output_dims_rejected() {
    let input = Shape::new(1, 1, 1);
    let a = Network::init(custom(input, vec![LayerSpec::Dense { inputs: 1, outputs: 2, activation: Activation::None }]), 0, false).unwrap();
    let b = Network::init(custom(input, vec![LayerSpec::Dense { inputs: 1, outputs: 3, activation: Activation::None }]), 0, true).unwrap();
    let x = ImageTensor::filled(input, 0.5);
    assert!(loss_and_grad(&a, &b, &[&x]).is_err());
    assert!(loss_and_grad(&b.clone(), &b, &[&x]).is_err(), "frozen predictor");
}

fn lrelu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.01 * x
    }
}

/// Direct loops over the tiny target's arithmetic.
fn straight_line_tiny(params: &[f64], input: Shape, x: &[f64]) -> Vec<f64> {
    let mut off = 0;
    let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
    let mut cur = x.to_vec();
    for out_c in [32usize, 64, 64] {
        let (oh, ow) = ((h + 1) / 2, (w + 1) / 2);
        let wt = &params[off..off + out_c * c * 9];
        let bias = &params[off + out_c * c * 9..off + out_c * c * 9 + out_c];
        off += out_c * c * 9 + out_c;
        let mut next = vec![0.0; out_c * oh * ow];
        for o in 0..out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = bias[o];
                    for ci in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (2 * oy + ky) as isize - 1;
                                let ix = (2 * ox + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += wt[((o * c + ci) * 3 + ky) * 3 + kx]
                                        * cur[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    next[(o * oh + oy) * ow + ox] = lrelu(s);
                }
            }
        }
        cur = next;
        c = out_c;
        h = oh;
        w = ow;
    }
    let inputs = cur.len();
    let wt = &params[off..off + 128 * inputs];
    let bias = &params[off + 128 * inputs..];
    (0..128)
        .map(|j| bias[j] + (0..inputs).map(|i| wt[j * inputs + i] * cur[i]).sum::<f64>())
        .collect()
}

#[test]
fn tiny_forward_matches_straight_line_recomputation() {
    let input = Shape::new(3, 10, 12);
    let net = Network::init(NetworkProfile::tiny_target(input), 21, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let images: Vec<ImageTensor> = (0..2).map(|_| random_image(input, &mut rng)).collect();
    let feats = net.forward(&images).unwrap();
    for (b, im) in images.iter().enumerate() {
        let want = straight_line_tiny(net.params(), input, im.as_slice());
        for (j, v) in want.iter().enumerate() {
            assert!((feats.get(b, j) - v).abs() <= 1e-5, "{b},{j}");
        }
    }
}

#[test]
fn linear_stack_maps_zero_to_zero() {
    let input = Shape::new(2, 5, 5);
    let prof = custom(
        input,
        vec![
            LayerSpec::Conv { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, activation: Activation::None },
            LayerSpec::Dense { inputs: 27, outputs: 4, activation: Activation::None },
        ],
    );
    let net = Network::init(prof, 2, true).unwrap();
    let out = net.forward(&[ImageTensor::zeros(input)]).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn batch_rows_are_independent_and_equivariant() {
    let input = Shape::new(3, 8, 8);
    let net = Network::init(NetworkProfile::tiny_predictor(input), 8, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_image(input, &mut rng);
    let b = random_image(input, &mut rng);
    let f = net.forward(&[a.clone(), b.clone(), a.clone()]).unwrap();
    let g = net.forward(&[b, a]).unwrap();
    for j in 0..net.output_dim() {
        assert_eq!(f.get(0, j), f.get(2, j));
        assert_eq!(f.get(0, j), g.get(1, j));
        assert_eq!(f.get(1, j), g.get(0, j));
    }
}

#[test]
fn resnet_profile_initializes() {
    let input = Shape::new(3, 32, 32);
    let net = Network::init(NetworkProfile::resnet_target(input), 1, true).unwrap();
    assert_eq!(net.output_dim(), 2048);
    assert!(net.param_count() > 20_000_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn finite_difference_agreement_on_random_configs(
        channels in 1usize..3,
        size in 3usize..6,
        width in 1usize..4,
        stride in 1usize..3,
        residual in any::<bool>(),
        act in prop_oneof![Just(Activation::Relu), Just(Activation::LeakyRelu), Just(Activation::None)],
        seed in 0u64..1000,
    ) {
        let (pred, target, images) = network_config(channels, size, width, stride, residual, act, seed);
        let refs: Vec<&ImageTensor> = images.iter().collect();
        let check = check_gradient(&pred, &target, &refs);
        prop_assert!(check.is_ok(), "{:?}", check);
    }
}
