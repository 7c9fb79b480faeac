//! Network architecture descriptors.

use serde::{Deserialize, Serialize};

use super::ops::ConvGeom;
use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    /// Slope 0.01 on the negative side.
    LeakyRelu,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    super::ops::LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Derivative at pre-activation `x` (the right derivative at 0).
    pub(crate) fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    super::ops::LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Square kernel, zero padding `kernel / 2`.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    /// `act(conv3(relu(conv3_s(x))) + shortcut(x))`; the shortcut is a
    /// strided 1×1 convolution unless shape is unchanged.
    Residual {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        activation: Activation,
    },
    /// Fully connected; spatial inputs are flattened channel-major.
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Conv { activation, .. }
            | LayerSpec::Residual { activation, .. }
            | LayerSpec::Dense { activation, .. } => activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Desk-scale three-convolution stack.
    Tiny,
    /// ResNet34-like trunk; descriptive, far too slow to train here.
    Resnet,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(ProfileKind::Tiny),
            "resnet" => Ok(ProfileKind::Resnet),
            other => Err(Error::invalid(format!("unknown network profile {other:?}"))),
        }
    }
}

/// Shape of the activations between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FeatureShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Spatial { c, h, w } => c * h * w,
            FeatureShape::Flat(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub kind: ProfileKind,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

const TINY_FEATURES: usize = 128;

fn conv(in_channels: usize, out_channels: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv {
        in_channels,
        out_channels,
        kernel: 3,
        stride,
        activation,
    }
}

fn residual(in_channels: usize, out_channels: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Residual {
        in_channels,
        out_channels,
        stride,
        activation,
    }
}

fn dense(inputs: usize, outputs: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        inputs,
        outputs,
        activation,
    }
}

fn strided_extent(n: usize, times: usize) -> usize {
    (0..times).fold(n, |n, _| (n + 1) / 2)
}

impl NetworkProfile {
    pub fn target(kind: ProfileKind, input: Shape) -> Self {
        match kind {
            ProfileKind::Tiny => Self::tiny_target(input),
            ProfileKind::Resnet => Self::resnet_target(input),
        }
    }

    pub fn predictor(kind: ProfileKind, input: Shape) -> Self {
        match kind {
            ProfileKind::Tiny => Self::tiny_predictor(input),
            ProfileKind::Resnet => Self::resnet_predictor(input),
        }
    }

    /// Three stride-2 3×3 convolutions (32, 64, 64 channels, leaky ReLU)
    /// and a linear projection to 128 features.
    pub fn tiny_target(input: Shape) -> Self {
        let lrelu = Activation::LeakyRelu;
        let h = strided_extent(input.height, 3);
        let w = strided_extent(input.width, 3);
        NetworkProfile {
            kind: ProfileKind::Tiny,
            input,
            layers: vec![
                conv(input.channels, 32, 2, lrelu),
                conv(32, 64, 2, lrelu),
                conv(64, 64, 2, lrelu),
                dense(64 * h * w, TINY_FEATURES, Activation::None),
            ],
        }
    }

    /// The target stack followed by two more dense layers.
    pub fn tiny_predictor(input: Shape) -> Self {
        let mut p = Self::tiny_target(input);
        p.layers.push(dense(TINY_FEATURES, 256, Activation::Relu));
        p.layers.push(dense(256, TINY_FEATURES, Activation::None));
        p
    }

    /// 7×7 stem plus 16 basic residual blocks (3/4/6/3 at 64/128/256/512
    /// channels): 33 weight layers. No final activation.
    pub fn resnet_target(input: Shape) -> Self {
        let relu = Activation::Relu;
        let mut layers = vec![LayerSpec::Conv {
            in_channels: input.channels,
            out_channels: 64,
            kernel: 7,
            stride: 2,
            activation: relu,
        }];
        let mut ch = 64;
        for (stage, (&width, &blocks)) in [64usize, 128, 256, 512].iter().zip(&[3usize, 4, 6, 3]).enumerate() {
            for b in 0..blocks {
                let stride = if b == 0 && stage > 0 { 2 } else { 1 };
                layers.push(residual(ch, width, stride, relu));
                ch = width;
            }
        }
        if let Some(LayerSpec::Residual { activation, .. }) = layers.last_mut() {
            *activation = Activation::None;
        }
        NetworkProfile {
            kind: ProfileKind::Resnet,
            input,
            layers,
        }
    }

    /// Target trunk with two appended residual blocks of widths 1024 and
    /// 512, the last without activation.
    pub fn resnet_predictor(input: Shape) -> Self {
        let mut p = Self::resnet_target(input);
        if let Some(LayerSpec::Residual { activation, .. }) = p.layers.last_mut() {
            *activation = Activation::Relu;
        }
        p.layers.push(residual(512, 1024, 1, Activation::Relu));
        p.layers.push(residual(1024, 512, 1, Activation::None));
        p
    }

    /// Infers every intermediate shape, rejecting stacks that do not compose.
    pub(crate) fn shapes(&self) -> Result<Vec<FeatureShape>> {
        let input = self.input;
        if input.is_empty() {
            return Err(Error::invalid("profile input shape is empty"));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid("profile has no layers"));
        }
        let mut cur = FeatureShape::Spatial {
            c: input.channels,
            h: input.height,
            w: input.width,
        };
        let mut out = vec![cur];
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::invalid(format!("layer {i}: {msg}"));
            cur = match (*layer, cur) {
                (
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        ..
                    },
                    FeatureShape::Spatial { c, h, w },
                ) => {
                    if in_channels != c {
                        return Err(bad(format!("expects {in_channels} channels, gets {c}")));
                    }
                    if kernel % 2 == 0 || out_channels == 0 {
                        return Err(bad("kernel must be odd and channels nonzero".into()));
                    }
                    let g = ConvGeom::new(c, h, w, out_channels, kernel, stride)
                        .ok_or_else(|| bad("convolution does not fit".into()))?;
                    FeatureShape::Spatial {
                        c: out_channels,
                        h: g.out_h,
                        w: g.out_w,
                    }
                }
                (
                    LayerSpec::Residual {
                        in_channels,
                        out_channels,
                        stride,
                        ..
                    },
                    FeatureShape::Spatial { c, h, w },
                ) => {
                    if in_channels != c {
                        return Err(bad(format!("expects {in_channels} channels, gets {c}")));
                    }
                    let g = ConvGeom::new(c, h, w, out_channels, 3, stride)
                        .ok_or_else(|| bad("convolution does not fit".into()))?;
                    FeatureShape::Spatial {
                        c: out_channels,
                        h: g.out_h,
                        w: g.out_w,
                    }
                }
                (LayerSpec::Dense { inputs, outputs, .. }, s) => {
                    if inputs != s.len() {
                        return Err(bad(format!("expects {inputs} inputs, gets {}", s.len())));
                    }
                    if outputs == 0 {
                        return Err(bad("zero outputs".into()));
                    }
                    FeatureShape::Flat(outputs)
                }
                (_, FeatureShape::Flat(_)) => {
                    return Err(bad("convolution after a flat layer".into()))
                }
            };
            out.push(cur);
        }
        if self.layers.last().map(LayerSpec::activation) != Some(Activation::None) {
            return Err(Error::invalid("final layer must not have an activation"));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn output_dim(&self) -> Result<usize> {
        Ok(self.shapes()?.last().map(FeatureShape::len).unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_profiles_compose() {
        for s in [Shape::new(3, 32, 32), Shape::new(1, 8, 8), Shape::new(3, 16, 12)] {
            let t = NetworkProfile::tiny_target(s);
            let p = NetworkProfile::tiny_predictor(s);
            assert_eq!(t.output_dim().unwrap(), 128);
            assert_eq!(p.output_dim().unwrap(), 128);
            assert_eq!(p.layers.len(), t.layers.len() + 2);
        }
    }

    #[test]
    fn resnet_profile_has_33_weight_layers() {
        let t = NetworkProfile::resnet_target(Shape::new(3, 32, 32));
        let weight_layers: usize = t
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Residual { .. } => 2,
                _ => 1,
            })
            .sum();
        assert_eq!(weight_layers, 33);
        assert_eq!(t.output_dim().unwrap(), 512 * 2 * 2);
        let p = NetworkProfile::resnet_predictor(Shape::new(3, 32, 32));
        assert_eq!(p.output_dim().unwrap(), 512 * 2 * 2);
    }

    #[test]
    fn malformed_profiles_rejected() {
        let mut p = NetworkProfile::tiny_target(Shape::new(3, 8, 8));
        p.layers[1] = conv(16, 64, 2, Activation::LeakyRelu);
        assert!(p.validate().is_err());

        let mut p = NetworkProfile::tiny_target(Shape::new(3, 8, 8));
        if let Some(LayerSpec::Dense { activation, .. }) = p.layers.last_mut() {
            *activation = Activation::Relu;
        }
        assert!(p.validate().is_err());

        let mut p = NetworkProfile::tiny_target(Shape::new(3, 8, 8));
        p.layers.push(conv(128, 4, 1, Activation::None));
        assert!(p.validate().is_err());
    }
}
