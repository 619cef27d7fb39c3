use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{ComplexConvParams, ConvParams, TransposedConvParams};
use crate::error::{Error, Result};
use crate::tensor::Real;

/// Channel width of the first encoder stage in the full-size network.
pub const FULL_WIDTH: usize = 64;
/// Width of the ÷16 profile used for fast runs and CI.
pub const TINY_WIDTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerMode {
    /// Ordinary real convolutions over all channels.
    Standard,
    /// Channels split into real/imaginary halves and combined with complex
    /// weight algebra.
    Complex,
}

impl LayerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerMode::Standard => "standard",
            LayerMode::Complex => "complex",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            LayerMode::Standard => 0,
            LayerMode::Complex => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(LayerMode::Standard),
            1 => Some(LayerMode::Complex),
            _ => None,
        }
    }

    /// Number of tensor parts an activation is carried in.
    pub(crate) fn parts(self) -> usize {
        match self {
            LayerMode::Standard => 1,
            LayerMode::Complex => 2,
        }
    }
}

impl fmt::Display for LayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LayerMode::Standard),
            "complex" => Ok(LayerMode::Complex),
            other => Err(Error::Config(format!(
                "unknown layer mode `{other}` (expected standard or complex)"
            ))),
        }
    }
}

/// A stride-1 convolution in either layer mode.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvLayer<T = f32> {
    Standard(ConvParams<T>),
    Complex(ComplexConvParams<T>),
}

/// A stride-2 transposed convolution in either layer mode.
#[derive(Clone, Debug, PartialEq)]
pub enum UpLayer<T = f32> {
    Standard(TransposedConvParams<T>),
    Complex {
        real: TransposedConvParams<T>,
        imag: TransposedConvParams<T>,
    },
}

/// Two 3×3 convolutions, each followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T = f32> {
    pub first: ConvLayer<T>,
    pub second: ConvLayer<T>,
}

/// Every learnable array of the three-level U-Net, in forward order.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetParams<T = f32> {
    pub mode: LayerMode,
    pub in_channels: usize,
    pub out_channels: usize,
    /// First-stage width; later stages use 2×, 4× and 8× this.
    pub base_width: usize,
    pub encoders: [Block<T>; 3],
    pub bottleneck: Block<T>,
    pub ups: [UpLayer<T>; 3],
    pub decoders: [Block<T>; 3],
    pub head: ConvLayer<T>,
}

/// One row of the architecture audit, in real channel counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub transposed: bool,
}

/// Borrowed view of one parameter array.
pub struct ParamArray<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [T],
}

fn conv_layer<T: Real>(mode: LayerMode, cin: usize, cout: usize, k: usize) -> ConvLayer<T> {
    match mode {
        LayerMode::Standard => ConvLayer::Standard(ConvParams::zeros(cout, cin, k)),
        LayerMode::Complex => ConvLayer::Complex(ComplexConvParams {
            real: ConvParams::zeros(cout / 2, cin / 2, k),
            imag: ConvParams::zeros(cout / 2, cin / 2, k),
        }),
    }
}

fn up_layer<T: Real>(mode: LayerMode, cin: usize, cout: usize) -> UpLayer<T> {
    match mode {
        LayerMode::Standard => UpLayer::Standard(TransposedConvParams::zeros(cin, cout)),
        LayerMode::Complex => UpLayer::Complex {
            real: TransposedConvParams::zeros(cin / 2, cout / 2),
            imag: TransposedConvParams::zeros(cin / 2, cout / 2),
        },
    }
}

fn block<T: Real>(mode: LayerMode, cin: usize, cout: usize) -> Block<T> {
    Block {
        first: conv_layer(mode, cin, cout, 3),
        second: conv_layer(mode, cout, cout, 3),
    }
}

impl<T: Real> UNetParams<T> {
    /// All-zero parameters with the given layout.
    pub fn zeros(
        mode: LayerMode,
        in_channels: usize,
        out_channels: usize,
        base_width: usize,
    ) -> Result<Self> {
        validate_layout(mode, in_channels, out_channels, base_width)?;
        let w = [base_width, 2 * base_width, 4 * base_width, 8 * base_width];
        Ok(Self {
            mode,
            in_channels,
            out_channels,
            base_width,
            encoders: [
                block(mode, in_channels, w[0]),
                block(mode, w[0], w[1]),
                block(mode, w[1], w[2]),
            ],
            bottleneck: block(mode, w[2], w[3]),
            ups: [
                up_layer(mode, w[3], w[2]),
                up_layer(mode, w[2], w[1]),
                up_layer(mode, w[1], w[0]),
            ],
            decoders: [
                block(mode, 2 * w[2], w[2]),
                block(mode, 2 * w[1], w[1]),
                block(mode, 2 * w[0], w[0]),
            ],
            head: conv_layer(mode, w[0], out_channels, 1),
        })
    }

    /// Shape-matched zeros, used for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.mode, self.in_channels, self.out_channels, self.base_width)
            .expect("layout already validated")
    }

    pub fn cast<U: Real>(&self) -> UNetParams<U> {
        let mut out = UNetParams::<U>::zeros(self.mode, self.in_channels, self.out_channels, self.base_width)
            .expect("layout already validated");
        for (dst, src) in out.arrays_mut().into_iter().zip(self.arrays()) {
            for (d, &s) in dst.iter_mut().zip(src.values) {
                *d = U::cast_from(s.as_f64());
            }
        }
        out
    }

    fn layers(&self) -> Vec<(String, LayerRef<'_, T>)> {
        let mut out = Vec::new();
        for (i, b) in self.encoders.iter().enumerate() {
            out.push((format!("enc{}.conv1", i + 1), LayerRef::Conv(&b.first)));
            out.push((format!("enc{}.conv2", i + 1), LayerRef::Conv(&b.second)));
        }
        out.push(("bottleneck.conv1".into(), LayerRef::Conv(&self.bottleneck.first)));
        out.push(("bottleneck.conv2".into(), LayerRef::Conv(&self.bottleneck.second)));
        for i in 0..3 {
            out.push((format!("up{}", i + 1), LayerRef::Up(&self.ups[i])));
            out.push((format!("dec{}.conv1", i + 1), LayerRef::Conv(&self.decoders[i].first)));
            out.push((format!("dec{}.conv2", i + 1), LayerRef::Conv(&self.decoders[i].second)));
        }
        out.push(("head".into(), LayerRef::Conv(&self.head)));
        out
    }

    /// Layer-by-layer channel progression in real channel counts.
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        self.layers()
            .into_iter()
            .map(|(name, layer)| {
                let (cin, cout, kernel, transposed) = match layer {
                    LayerRef::Conv(ConvLayer::Standard(p)) => (p.cin, p.cout, p.k, false),
                    LayerRef::Conv(ConvLayer::Complex(p)) => (2 * p.real.cin, 2 * p.real.cout, p.real.k, false),
                    LayerRef::Up(UpLayer::Standard(p)) => (p.cin, p.cout, 2, true),
                    LayerRef::Up(UpLayer::Complex { real, .. }) => (2 * real.cin, 2 * real.cout, 2, true),
                };
                LayerShape {
                    name,
                    in_channels: cin,
                    out_channels: cout,
                    kernel,
                    transposed,
                }
            })
            .collect()
    }

    /// Every parameter array with its name and shape, in a fixed order.
    pub fn arrays(&self) -> Vec<ParamArray<'_, T>> {
        let mut out = Vec::new();
        for (name, layer) in self.layers() {
            match layer {
                LayerRef::Conv(ConvLayer::Standard(p)) => push_conv(&mut out, &name, "", p),
                LayerRef::Conv(ConvLayer::Complex(p)) => {
                    push_conv(&mut out, &name, "_re", &p.real);
                    push_conv(&mut out, &name, "_im", &p.imag);
                }
                LayerRef::Up(UpLayer::Standard(p)) => push_up(&mut out, &name, "", p),
                LayerRef::Up(UpLayer::Complex { real, imag }) => {
                    push_up(&mut out, &name, "_re", real);
                    push_up(&mut out, &name, "_im", imag);
                }
            }
        }
        out
    }

    /// Mutable counterpart of [`arrays`](Self::arrays), same order.
    pub fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        fn conv<'a, T>(out: &mut Vec<&'a mut [T]>, layer: &'a mut ConvLayer<T>) {
            match layer {
                ConvLayer::Standard(p) => {
                    out.push(&mut p.weights);
                    out.push(&mut p.bias);
                }
                ConvLayer::Complex(p) => {
                    out.push(&mut p.real.weights);
                    out.push(&mut p.real.bias);
                    out.push(&mut p.imag.weights);
                    out.push(&mut p.imag.bias);
                }
            }
        }
        fn up<'a, T>(out: &mut Vec<&'a mut [T]>, layer: &'a mut UpLayer<T>) {
            match layer {
                UpLayer::Standard(p) => {
                    out.push(&mut p.weights);
                    out.push(&mut p.bias);
                }
                UpLayer::Complex { real, imag } => {
                    out.push(&mut real.weights);
                    out.push(&mut real.bias);
                    out.push(&mut imag.weights);
                    out.push(&mut imag.bias);
                }
            }
        }
        let mut out = Vec::new();
        for b in &mut self.encoders {
            conv(&mut out, &mut b.first);
            conv(&mut out, &mut b.second);
        }
        conv(&mut out, &mut self.bottleneck.first);
        conv(&mut out, &mut self.bottleneck.second);
        for (u, d) in self.ups.iter_mut().zip(&mut self.decoders) {
            up(&mut out, u);
            conv(&mut out, &mut d.first);
            conv(&mut out, &mut d.second);
        }
        conv(&mut out, &mut self.head);
        out
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|a| a.values.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.values.iter().all(|v| v.is_finite()))
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, &s) in dst.iter_mut().zip(src.values) {
                *d = *d + s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for dst in self.arrays_mut() {
            for d in dst.iter_mut() {
                *d = *d * factor;
            }
        }
    }
}

enum LayerRef<'a, T> {
    Conv(&'a ConvLayer<T>),
    Up(&'a UpLayer<T>),
}

fn push_conv<'a, T>(out: &mut Vec<ParamArray<'a, T>>, name: &str, suffix: &str, p: &'a ConvParams<T>) {
    out.push(ParamArray {
        name: format!("{name}.weight{suffix}"),
        shape: vec![p.cout, p.cin, p.k, p.k],
        values: &p.weights,
    });
    out.push(ParamArray {
        name: format!("{name}.bias{suffix}"),
        shape: vec![p.cout],
        values: &p.bias,
    });
}

fn push_up<'a, T>(out: &mut Vec<ParamArray<'a, T>>, name: &str, suffix: &str, p: &'a TransposedConvParams<T>) {
    out.push(ParamArray {
        name: format!("{name}.weight{suffix}"),
        shape: vec![p.cin, p.cout, 2, 2],
        values: &p.weights,
    });
    out.push(ParamArray {
        name: format!("{name}.bias{suffix}"),
        shape: vec![p.cout],
        values: &p.bias,
    });
}

pub(crate) fn validate_layout(
    mode: LayerMode,
    in_channels: usize,
    out_channels: usize,
    base_width: usize,
) -> Result<()> {
    match (in_channels, out_channels) {
        (2, 2) | (1, 1) => {}
        other => {
            return Err(Error::Config(format!(
                "channel configuration {other:?} must be (2, 2) or (1, 1)"
            )))
        }
    }
    if base_width == 0 {
        return Err(Error::Config("base width must be positive".into()));
    }
    if mode == LayerMode::Complex && (!in_channels.is_multiple_of(2) || !base_width.is_multiple_of(2)) {
        return Err(Error::Config(format!(
            "complex layers need even channel counts, got in={in_channels} width={base_width}"
        )));
    }
    Ok(())
}

/// He-normal weights (std `sqrt(2 / fan_in)` with fan-in counted in real
/// channels), zero biases. Deterministic per seed.
pub fn init_params<T: Real>(
    seed: u64,
    mode: LayerMode,
    in_channels: usize,
    out_channels: usize,
    base_width: usize,
) -> Result<UNetParams<T>> {
    let mut params = UNetParams::<T>::zeros(mode, in_channels, out_channels, base_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fan-in per weight array, from the real-channel layer audit.
    let fans: Vec<usize> = params
        .layer_shapes()
        .iter()
        .map(|s| s.in_channels * s.kernel * s.kernel)
        .collect();
    let per_layer = mode.parts() * 2;
    for (i, arr) in params.arrays_mut().into_iter().enumerate() {
        let is_bias = i % 2 == 1;
        if is_bias {
            continue;
        }
        let std = (2.0 / fans[i / per_layer] as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for v in arr.iter_mut() {
            *v = T::cast_from(normal.sample(&mut rng));
        }
    }
    Ok(params)
}
