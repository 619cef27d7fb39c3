//! Forward and reverse passes of the three-level U-Net.
//!
//! Activations travel as one tensor (standard layers) or as a real/imaginary
//! pair of tensors (complex layers). Skip connections concatenate the pre-pool
//! encoder outputs after each upsampling.

use super::layers::{self, PoolIndices};
use super::params::{Block, ConvLayer, LayerMode, UNetParams, UpLayer};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// One activation: `[x]` or `[real, imag]`.
type Feature<T> = Vec<Tensor<T>>;

/// Reverse-mode gradients: one array per parameter array plus the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T = f32> {
    pub params: UNetParams<T>,
    pub input: Tensor<T>,
}

struct BlockTrace<T> {
    input: Feature<T>,
    mid: Feature<T>,
    out: Feature<T>,
}

/// Every activation the backward pass needs.
pub struct Trace<T> {
    encoders: Vec<BlockTrace<T>>,
    pools: Vec<Vec<PoolIndices>>,
    bottleneck: BlockTrace<T>,
    decoders: Vec<BlockTrace<T>>,
    /// Channels contributed by the upsampling path in each decoder concat.
    up_channels: Vec<usize>,
}

fn stage_err(stage: &str, e: Error) -> Error {
    match e {
        Error::Shape { detail, .. } => Error::shape(stage, detail),
        Error::Dimension(d) => Error::shape(stage, d),
        other => other,
    }
}

fn conv_forward<T: Real>(layer: &ConvLayer<T>, x: &[Tensor<T>], stage: &str) -> Result<Feature<T>> {
    match layer {
        ConvLayer::Standard(p) => Ok(vec![layers::conv_same(&x[0], p).map_err(|e| stage_err(stage, e))?]),
        ConvLayer::Complex(p) => {
            let (r, i) = layers::complex_conv(&x[0], &x[1], p).map_err(|e| stage_err(stage, e))?;
            Ok(vec![r, i])
        }
    }
}

fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    x: &[Tensor<T>],
    g: &[Tensor<T>],
    grad: &mut ConvLayer<T>,
) -> Feature<T> {
    match (layer, grad) {
        (ConvLayer::Standard(p), ConvLayer::Standard(gp)) => vec![layers::conv_backward(&x[0], p, &g[0], gp)],
        (ConvLayer::Complex(p), ConvLayer::Complex(gp)) => {
            let (dr, di) = layers::complex_conv_backward(&x[0], &x[1], p, &g[0], &g[1], gp);
            vec![dr, di]
        }
        _ => unreachable!("gradient layout mirrors parameter layout"),
    }
}

fn up_forward<T: Real>(layer: &UpLayer<T>, x: &[Tensor<T>], stage: &str) -> Result<Feature<T>> {
    match layer {
        UpLayer::Standard(p) => Ok(vec![layers::upconv2(&x[0], p).map_err(|e| stage_err(stage, e))?]),
        UpLayer::Complex { real, imag } => {
            let (r, i) = layers::complex_upconv2(&x[0], &x[1], real, imag).map_err(|e| stage_err(stage, e))?;
            Ok(vec![r, i])
        }
    }
}

fn up_backward<T: Real>(layer: &UpLayer<T>, x: &[Tensor<T>], g: &[Tensor<T>], grad: &mut UpLayer<T>) -> Feature<T> {
    match (layer, grad) {
        (UpLayer::Standard(p), UpLayer::Standard(gp)) => vec![layers::upconv2_backward(&x[0], p, &g[0], gp)],
        (UpLayer::Complex { real, imag }, UpLayer::Complex { real: gr, imag: gi }) => {
            let (dr, di) = layers::complex_upconv2_backward(&x[0], &x[1], real, imag, &g[0], &g[1], gr, gi);
            vec![dr, di]
        }
        _ => unreachable!("gradient layout mirrors parameter layout"),
    }
}

fn block_forward<T: Real>(block: &Block<T>, input: Feature<T>, stage: &str) -> Result<BlockTrace<T>> {
    let mut mid = conv_forward(&block.first, &input, stage)?;
    mid.iter_mut().for_each(layers::relu_in_place);
    let mut out = conv_forward(&block.second, &mid, stage)?;
    out.iter_mut().for_each(layers::relu_in_place);
    Ok(BlockTrace { input, mid, out })
}

fn block_backward<T: Real>(block: &Block<T>, trace: &BlockTrace<T>, mut g: Feature<T>, grad: &mut Block<T>) -> Feature<T> {
    for (gi, o) in g.iter_mut().zip(&trace.out) {
        layers::relu_backward_in_place(o, gi);
    }
    let mut g_mid = conv_backward(&block.second, &trace.mid, &g, &mut grad.second);
    for (gi, o) in g_mid.iter_mut().zip(&trace.mid) {
        layers::relu_backward_in_place(o, gi);
    }
    conv_backward(&block.first, &trace.input, &g_mid, &mut grad.first)
}

fn pool<T: Real>(x: &[Tensor<T>], stage: &str) -> Result<(Feature<T>, Vec<PoolIndices>)> {
    let mut out = Vec::with_capacity(x.len());
    let mut idx = Vec::with_capacity(x.len());
    for part in x {
        let (p, i) = layers::maxpool2(part).map_err(|e| stage_err(stage, e))?;
        out.push(p);
        idx.push(i);
    }
    Ok((out, idx))
}

fn concat<T: Real>(a: &[Tensor<T>], b: &[Tensor<T>], stage: &str) -> Result<Feature<T>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| layers::concat(x, y).map_err(|e| stage_err(stage, e)))
        .collect()
}

fn pack<T: Real>(mode: LayerMode, input: &Tensor<T>) -> Feature<T> {
    match mode {
        LayerMode::Standard => vec![input.clone()],
        LayerMode::Complex => {
            let half = input.channels() / 2;
            vec![
                input.slice_channels(0..half),
                input.slice_channels(half..input.channels()),
            ]
        }
    }
}

fn unpack<T: Real>(mut f: Feature<T>) -> Tensor<T> {
    if f.len() == 1 {
        f.pop().expect("one part")
    } else {
        layers::concat(&f[0], &f[1]).expect("parts share spatial dims")
    }
}

fn check_input<T: Real>(params: &UNetParams<T>, input: &Tensor<T>) -> Result<()> {
    if input.channels() != params.in_channels {
        return Err(Error::shape(
            "input",
            format!("expected {} channels, got {}", params.in_channels, input.channels()),
        ));
    }
    let (h, w) = (input.height(), input.width());
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::shape(
            "input",
            format!("spatial dims {h}x{w} must be positive multiples of 8"),
        ));
    }
    Ok(())
}

/// Forward pass that keeps the activations needed by [`backward`].
pub fn forward_with_trace<T: Real>(params: &UNetParams<T>, input: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
    check_input(params, input)?;
    let names = ["enc1", "enc2", "enc3"];
    let mut encoders = Vec::with_capacity(3);
    let mut pools = Vec::with_capacity(3);
    let mut x = pack(params.mode, input);
    for (i, block) in params.encoders.iter().enumerate() {
        let trace = block_forward(block, x, names[i])?;
        let (pooled, idx) = pool(&trace.out, &format!("pool{}", i + 1))?;
        encoders.push(trace);
        pools.push(idx);
        x = pooled;
    }
    let bottleneck = block_forward(&params.bottleneck, x, "bottleneck")?;

    let mut decoders: Vec<BlockTrace<T>> = Vec::with_capacity(3);
    let mut up_channels = Vec::with_capacity(3);
    for i in 0..3 {
        let below = if i == 0 { &bottleneck.out } else { &decoders[i - 1].out };
        let up = up_forward(&params.ups[i], below, &format!("up{}", i + 1))?;
        up_channels.push(up[0].channels());
        let skip = &encoders[2 - i].out;
        let joined = concat(&up, skip, &format!("concat{}", i + 1))?;
        decoders.push(block_forward(&params.decoders[i], joined, &format!("dec{}", i + 1))?);
    }
    let out = conv_forward(&params.head, &decoders[2].out, "head")?;
    Ok((
        unpack(out),
        Trace {
            encoders,
            pools,
            bottleneck,
            decoders,
            up_channels,
        },
    ))
}

/// `f_θ(input)`; the head has no activation.
pub fn unet_forward<T: Real>(params: &UNetParams<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    forward_with_trace(params, input).map(|(out, _)| out)
}

/// Reverse pass over a recorded trace.
pub fn backward<T: Real>(params: &UNetParams<T>, trace: &Trace<T>, upstream: &Tensor<T>) -> Result<GradientSet<T>> {
    let (h, w) = (trace.encoders[0].input[0].height(), trace.encoders[0].input[0].width());
    if upstream.shape() != (params.out_channels, h, w) {
        return Err(Error::shape(
            "upstream gradient",
            format!(
                "expected {:?}, got {:?}",
                (params.out_channels, h, w),
                upstream.shape()
            ),
        ));
    }
    let mut grads = params.zeros_like();
    let g_out = pack(params.mode, upstream);
    let mut g = conv_backward(&params.head, &trace.decoders[2].out, &g_out, &mut grads.head);

    let mut skip_grads: Vec<Feature<T>> = vec![Vec::new(); 3];
    for i in (0..3).rev() {
        let g_joined = block_backward(&params.decoders[i], &trace.decoders[i], g, &mut grads.decoders[i]);
        let mut g_up = Vec::with_capacity(g_joined.len());
        let mut g_skip = Vec::with_capacity(g_joined.len());
        for part in &g_joined {
            let (a, b) = layers::split_channels(part, trace.up_channels[i]);
            g_up.push(a);
            g_skip.push(b);
        }
        skip_grads[2 - i] = g_skip;
        let below = if i == 0 { &trace.bottleneck.out } else { &trace.decoders[i - 1].out };
        g = up_backward(&params.ups[i], below, &g_up, &mut grads.ups[i]);
    }
    g = block_backward(&params.bottleneck, &trace.bottleneck, g, &mut grads.bottleneck);
    for i in (0..3).rev() {
        let mut g_enc: Feature<T> = g
            .iter()
            .zip(&trace.pools[i])
            .map(|(gp, idx)| layers::maxpool2_backward(gp, idx))
            .collect();
        for (a, b) in g_enc.iter_mut().zip(&skip_grads[i]) {
            a.add_assign(b);
        }
        g = block_backward(&params.encoders[i], &trace.encoders[i], g_enc, &mut grads.encoders[i]);
    }
    Ok(GradientSet {
        params: grads,
        input: unpack(g),
    })
}

/// Gradients of `<upstream, f_θ(input)>` with respect to every parameter and the input.
pub fn unet_backward<T: Real>(params: &UNetParams<T>, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<GradientSet<T>> {
    let (_, trace) = forward_with_trace(params, input)?;
    backward(params, &trace, upstream)
}
