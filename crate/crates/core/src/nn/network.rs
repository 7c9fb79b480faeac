use std::ops::Range;

use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::ops::{conv_backward, conv_forward, dense_backward, dense_forward, ConvGeom};
use super::profile::{Activation, FeatureShape, LayerSpec, NetworkProfile};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
struct ConvSlot {
    geom: ConvGeom,
    w: Range<usize>,
    b: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Conv {
        conv: ConvSlot,
        act: Activation,
    },
    Residual {
        first: ConvSlot,
        second: ConvSlot,
        projection: Option<ConvSlot>,
        act: Activation,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        w: Range<usize>,
        b: Range<usize>,
        act: Activation,
    },
}

enum Trace {
    Conv {
        cols: Vec<f64>,
        pre: Vec<f64>,
    },
    Residual {
        cols1: Vec<f64>,
        pre1: Vec<f64>,
        cols2: Vec<f64>,
        cols_proj: Option<Vec<f64>>,
        pre: Vec<f64>,
    },
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
    },
}

/// Forward activations kept for a backward pass.
pub struct ForwardTrace {
    batch: usize,
    layers: Vec<Trace>,
    output: Vec<f64>,
}

impl ForwardTrace {
    /// `[batch, output_dim]` row-major.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameters of one network, stored flat with per-layer views.
///
/// Layers appear in order. A convolution stores weights `[out][in][ky][kx]`
/// then its bias; a residual block stores its two convolutions and then the
/// optional 1×1 projection; a dense layer stores `[outputs][inputs]` then
/// its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    profile: NetworkProfile,
    params: Vec<f64>,
    slots: Vec<Slot>,
    output_dim: usize,
    frozen: bool,
}

fn activate(act: Activation, pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&x| act.apply(x)).collect()
}

fn activate_backward(act: Activation, pre: &[f64], mut grad: Vec<f64>) -> Vec<f64> {
    if act != Activation::None {
        for (g, &x) in grad.iter_mut().zip(pre) {
            *g *= act.derivative(x);
        }
    }
    grad
}

struct Allocator(usize);

impl Allocator {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }

    fn conv(&mut self, c: usize, h: usize, w: usize, out: usize, k: usize, s: usize) -> ConvSlot {
        let geom = ConvGeom::new(c, h, w, out, k, s).expect("shapes() validated geometry");
        let w = self.take(geom.weight_len());
        let b = self.take(out);
        ConvSlot { geom, w, b }
    }
}

fn layout(profile: &NetworkProfile) -> Result<(Vec<Slot>, usize, usize)> {
    let shapes = profile.shapes()?;
    let mut alloc = Allocator(0);
    let mut slots = Vec::with_capacity(profile.layers.len());
    for (layer, shape) in profile.layers.iter().zip(&shapes) {
        let slot = match (*layer, *shape) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    activation,
                    ..
                },
                FeatureShape::Spatial { c, h, w },
            ) => Slot::Conv {
                conv: alloc.conv(c, h, w, out_channels, kernel, stride),
                act: activation,
            },
            (
                LayerSpec::Residual {
                    out_channels,
                    stride,
                    activation,
                    ..
                },
                FeatureShape::Spatial { c, h, w },
            ) => {
                let first = alloc.conv(c, h, w, out_channels, 3, stride);
                let (oh, ow) = (first.geom.out_h, first.geom.out_w);
                let second = alloc.conv(out_channels, oh, ow, out_channels, 3, 1);
                let projection = (c != out_channels || stride != 1)
                    .then(|| alloc.conv(c, h, w, out_channels, 1, stride));
                Slot::Residual {
                    first,
                    second,
                    projection,
                    act: activation,
                }
            }
            (
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    activation,
                },
                _,
            ) => {
                let w = alloc.take(inputs * outputs);
                let b = alloc.take(outputs);
                Slot::Dense {
                    inputs,
                    outputs,
                    w,
                    b,
                    act: activation,
                }
            }
            _ => unreachable!("shapes() rejects conv after flat"),
        };
        slots.push(slot);
    }
    let output_dim = shapes.last().map(FeatureShape::len).unwrap_or(0);
    Ok((slots, alloc.0, output_dim))
}

impl Network {
    /// He-normal weights (`N(0, 2/fan_in)`), zero biases, drawn in layer
    /// order from a generator seeded with `seed`.
    pub fn init(profile: NetworkProfile, seed: u64, frozen: bool) -> Result<Self> {
        let (slots, count, output_dim) = layout(&profile)?;
        let mut params = vec![0.0; count];
        let mut rng = seed::rng(seed);
        let mut fill = |range: &Range<usize>, fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[range.clone()] {
                *p = normal.sample(&mut rng);
            }
        };
        for slot in &slots {
            match slot {
                Slot::Conv { conv, .. } => fill(&conv.w, conv.geom.patch()),
                Slot::Residual {
                    first,
                    second,
                    projection,
                    ..
                } => {
                    fill(&first.w, first.geom.patch());
                    fill(&second.w, second.geom.patch());
                    if let Some(p) = projection {
                        fill(&p.w, p.geom.patch());
                    }
                }
                Slot::Dense { inputs, w, .. } => fill(w, *inputs),
            }
        }
        Ok(Network {
            profile,
            params,
            slots,
            output_dim,
            frozen,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(profile: NetworkProfile, params: Vec<f64>, frozen: bool) -> Result<Self> {
        let (slots, count, output_dim) = layout(&profile)?;
        if params.len() != count {
            return Err(Error::shape(count, params.len()));
        }
        crate::error::check_finite(&params, "network parameters")?;
        Ok(Network {
            profile,
            params,
            slots,
            output_dim,
            frozen,
        })
    }

    /// A trainable copy with identical parameters.
    pub fn trainable_copy(&self) -> Network {
        Network {
            frozen: false,
            ..self.clone()
        }
    }

    pub fn profile(&self) -> &NetworkProfile {
        &self.profile
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn input_len(&self) -> usize {
        self.profile.input.len()
    }

    /// Mutable parameter access; refused for frozen networks.
    pub fn params_mut(&mut self) -> Result<&mut [f64]> {
        if self.frozen {
            return Err(Error::invalid("frozen network parameters cannot change"));
        }
        Ok(&mut self.params)
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Packs images into one `[n, C·H·W]` buffer after checking shapes.
    pub fn pack(&self, images: &[&ImageTensor]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(images.len() * self.input_len());
        for (i, im) in images.iter().enumerate() {
            if im.shape() != self.profile.input {
                return Err(Error::at_image(i, Error::shape(self.profile.input, im.shape())));
            }
            x.extend_from_slice(im.as_slice());
        }
        Ok(x)
    }

    /// Features for a batch, one row per image.
    pub fn forward(&self, images: &[ImageTensor]) -> Result<Matrix> {
        let refs: Vec<&ImageTensor> = images.iter().collect();
        self.forward_refs(&refs)
    }

    pub fn forward_refs(&self, images: &[&ImageTensor]) -> Result<Matrix> {
        let x = self.pack(images)?;
        Matrix::from_vec(images.len(), self.output_dim, self.forward_packed(&x, images.len()))
    }

    /// Forward on a packed `[n, input_len]` buffer.
    pub fn forward_packed(&self, x: &[f64], n: usize) -> Vec<f64> {
        self.run(x, n, self.slots.len(), false).output
    }

    /// Activations after the first `layers` layers, flattened per image.
    pub fn features_at(&self, images: &[ImageTensor], layers: usize) -> Result<Matrix> {
        if layers == 0 || layers > self.slots.len() {
            return Err(Error::invalid(format!(
                "layer cut {layers} outside 1..={}",
                self.slots.len()
            )));
        }
        let refs: Vec<&ImageTensor> = images.iter().collect();
        let x = self.pack(&refs)?;
        let out = self.run(&x, images.len(), layers, false).output;
        let width = out.len() / images.len().max(1);
        Matrix::from_vec(images.len(), width, out)
    }

    pub fn forward_trace(&self, x: &[f64], n: usize) -> ForwardTrace {
        self.run(x, n, self.slots.len(), true)
    }

    fn run(&self, x: &[f64], n: usize, layers: usize, keep: bool) -> ForwardTrace {
        assert_eq!(x.len(), n * self.input_len(), "packed input length");
        let p = &self.params;
        let mut cur = x.to_vec();
        let mut traces = Vec::new();
        for slot in &self.slots[..layers] {
            match slot {
                Slot::Conv { conv, act } => {
                    let (cols, pre) = conv_forward(&conv.geom, n, &cur, &p[conv.w.clone()], &p[conv.b.clone()]);
                    cur = activate(*act, &pre);
                    if keep {
                        traces.push(Trace::Conv { cols, pre });
                    }
                }
                Slot::Residual {
                    first,
                    second,
                    projection,
                    act,
                } => {
                    let (cols1, pre1) =
                        conv_forward(&first.geom, n, &cur, &p[first.w.clone()], &p[first.b.clone()]);
                    let mid = activate(Activation::Relu, &pre1);
                    let (cols2, mut pre) =
                        conv_forward(&second.geom, n, &mid, &p[second.w.clone()], &p[second.b.clone()]);
                    let cols_proj = match projection {
                        Some(proj) => {
                            let (cols, short) =
                                conv_forward(&proj.geom, n, &cur, &p[proj.w.clone()], &p[proj.b.clone()]);
                            for (a, s) in pre.iter_mut().zip(&short) {
                                *a += s;
                            }
                            Some(cols)
                        }
                        None => {
                            for (a, s) in pre.iter_mut().zip(&cur) {
                                *a += s;
                            }
                            None
                        }
                    };
                    cur = activate(*act, &pre);
                    if keep {
                        traces.push(Trace::Residual {
                            cols1,
                            pre1,
                            cols2,
                            cols_proj,
                            pre,
                        });
                    }
                }
                Slot::Dense {
                    inputs,
                    outputs,
                    w,
                    b,
                    act,
                } => {
                    let pre = dense_forward(n, *inputs, *outputs, &cur, &p[w.clone()], &p[b.clone()]);
                    let out = activate(*act, &pre);
                    if keep {
                        traces.push(Trace::Dense {
                            input: std::mem::take(&mut cur),
                            pre,
                        });
                    }
                    cur = out;
                }
            }
        }
        ForwardTrace {
            batch: n,
            layers: traces,
            output: cur,
        }
    }

    /// Gradient of `Σ dout · output` with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, dout: Vec<f64>) -> Vec<f64> {
        assert_eq!(trace.layers.len(), self.slots.len(), "trace from a full forward pass");
        assert_eq!(dout.len(), trace.output.len(), "output gradient length");
        let n = trace.batch;
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut d = dout;
        for (i, (slot, tr)) in self.slots.iter().zip(&trace.layers).enumerate().rev() {
            let want_input = i > 0;
            d = match (slot, tr) {
                (Slot::Conv { conv, act }, Trace::Conv { cols, pre }) => {
                    let dpre = activate_backward(*act, pre, d);
                    let (gw, gb) = split_grad(&mut grad, &conv.w, &conv.b);
                    conv_backward(&conv.geom, n, cols, &p[conv.w.clone()], &dpre, gw, gb, want_input)
                        .unwrap_or_default()
                }
                (
                    Slot::Residual {
                        first,
                        second,
                        projection,
                        act,
                    },
                    Trace::Residual {
                        cols1,
                        pre1,
                        cols2,
                        cols_proj,
                        pre,
                    },
                ) => {
                    let dpre = activate_backward(*act, pre, d);
                    let (gw, gb) = split_grad(&mut grad, &second.w, &second.b);
                    let dmid = conv_backward(&second.geom, n, cols2, &p[second.w.clone()], &dpre, gw, gb, true)
                        .expect("requested input gradient");
                    let dz1 = activate_backward(Activation::Relu, pre1, dmid);
                    let (gw, gb) = split_grad(&mut grad, &first.w, &first.b);
                    let dx = conv_backward(&first.geom, n, cols1, &p[first.w.clone()], &dz1, gw, gb, want_input);
                    let dshort = match (projection, cols_proj) {
                        (Some(proj), Some(cols)) => {
                            let (gw, gb) = split_grad(&mut grad, &proj.w, &proj.b);
                            conv_backward(&proj.geom, n, cols, &p[proj.w.clone()], &dpre, gw, gb, want_input)
                        }
                        _ => want_input.then_some(dpre),
                    };
                    match (dx, dshort) {
                        (Some(mut a), Some(b)) => {
                            for (x, y) in a.iter_mut().zip(&b) {
                                *x += y;
                            }
                            a
                        }
                        _ => Vec::new(),
                    }
                }
                (
                    Slot::Dense {
                        inputs,
                        outputs,
                        w,
                        b,
                        act,
                    },
                    Trace::Dense { input, pre },
                ) => {
                    let dpre = activate_backward(*act, pre, d);
                    let (gw, gb) = split_grad(&mut grad, w, b);
                    dense_backward(n, *inputs, *outputs, input, &p[w.clone()], &dpre, gw, gb, want_input)
                        .unwrap_or_default()
                }
                _ => unreachable!("trace layers mirror slots"),
            };
        }
        grad
    }
}

/// Borrows the weight and bias gradient ranges; weights always precede
/// their bias.
fn split_grad<'a>(grad: &'a mut [f64], w: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    let (head, tail) = grad.split_at_mut(b.start);
    (&mut head[w.clone()], &mut tail[..b.len()])
}
