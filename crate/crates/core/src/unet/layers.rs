//! Layer primitives with hand-written reverse-mode gradients.
//!
//! Convolutions lower to GEMM through an im2col buffer. Every backward pass is
//! the exact adjoint of its forward pass.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `Cout×Cin×k×k` weights plus one bias per output channel. Odd `k`, zero
/// padding of `k/2`, stride 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub cout: usize,
    pub cin: usize,
    pub k: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(cout: usize, cin: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        Self {
            cout,
            cin,
            k,
            weights: vec![T::zero(); cout * cin * k * k],
            bias: vec![T::zero(); cout],
        }
    }

    pub fn new(cout: usize, cin: usize, k: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if k.is_multiple_of(2) || weights.len() != cout * cin * k * k || bias.len() != cout {
            return Err(Error::shape(
                "conv params",
                format!(
                    "{} weights / {} biases for {cout}x{cin}x{k}x{k}",
                    weights.len(),
                    bias.len()
                ),
            ));
        }
        Ok(Self {
            cout,
            cin,
            k,
            weights,
            bias,
        })
    }

    pub fn weight(&self, co: usize, ci: usize, ky: usize, kx: usize) -> T {
        self.weights[((co * self.cin + ci) * self.k + ky) * self.k + kx]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Real and imaginary kernels of a complex convolution; channel counts are in
/// complex channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexConvParams<T = f32> {
    pub real: ConvParams<T>,
    pub imag: ConvParams<T>,
}

impl<T: Real> ComplexConvParams<T> {
    pub fn new(real: ConvParams<T>, imag: ConvParams<T>) -> Result<Self> {
        if (real.cout, real.cin, real.k) != (imag.cout, imag.cin, imag.k) {
            return Err(Error::shape(
                "complex conv params",
                "real and imaginary kernels differ in shape",
            ));
        }
        Ok(Self { real, imag })
    }
}

/// `Cin×Cout×2×2` kernel of a stride-2 transposed convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TransposedConvParams<T = f32> {
    pub cin: usize,
    pub cout: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> TransposedConvParams<T> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            weights: vec![T::zero(); cin * cout * 4],
            bias: vec![T::zero(); cout],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn check_channels(stage: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::shape(
            stage,
            format!("expected {expected} input channels, got {found}"),
        ));
    }
    Ok(())
}

/// Unfold `x` into a `(Cin·k², H·W)` matrix of zero-padded neighbourhoods.
pub(crate) fn im2col<T: Real>(x: &Tensor<T>, k: usize) -> Vec<T> {
    let (cin, h, w) = x.shape();
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut col = vec![T::zero(); cin * k * k * hw];
    for ci in 0..cin {
        let plane = x.channel(ci);
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dx = kx as isize - pad;
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                // Valid output columns for this horizontal shift.
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let s0 = (x_lo as isize + dx) as usize;
                    dst[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add columns back onto an image.
pub(crate) fn col2im_add<T: Real>(col: &[T], dx: &mut Tensor<T>, k: usize) {
    let (cin, h, w) = dx.shape();
    let hw = h * w;
    let pad = (k / 2) as isize;
    for ci in 0..cin {
        let plane = dx.channel_mut(ci);
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dxs = kx as isize - pad;
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let x_lo = (-dxs).max(0) as usize;
                let x_hi = (w as isize - dxs).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + dxs) as usize;
                    let dst = &mut plane[sy as usize * w + s0..][..x_hi - x_lo];
                    for (d, &g) in dst.iter_mut().zip(&row[y * w + x_lo..y * w + x_hi]) {
                        *d = *d + g;
                    }
                }
            }
        }
    }
}

/// `out ← alpha · W·col + beta · out`, with `W` as `(cout, cin·k²)`.
#[allow(clippy::too_many_arguments)]
fn weights_times_col<T: Real>(
    weights: &[T],
    cout: usize,
    ck2: usize,
    col: &[T],
    hw: usize,
    alpha: T,
    beta: T,
    out: &mut [T],
) {
    T::gemm(
        cout, ck2, hw, alpha, weights, ck2 as isize, 1, col, hw as isize, 1, beta, out,
        hw as isize, 1,
    );
}

/// `dw ← dw + alpha · dout·colᵀ`.
fn accumulate_weight_grad<T: Real>(
    dout: &[T],
    cout: usize,
    col: &[T],
    ck2: usize,
    hw: usize,
    alpha: T,
    dw: &mut [T],
) {
    T::gemm(
        cout, hw, ck2, alpha, dout, hw as isize, 1, col, 1, hw as isize, T::one(), dw,
        ck2 as isize, 1,
    );
}

/// `dcol ← dcol + alpha · Wᵀ·dout`.
fn accumulate_col_grad<T: Real>(
    weights: &[T],
    cout: usize,
    ck2: usize,
    dout: &[T],
    hw: usize,
    alpha: T,
    dcol: &mut [T],
) {
    T::gemm(
        ck2, cout, hw, alpha, weights, 1, ck2 as isize, dout, hw as isize, 1, T::one(), dcol,
        hw as isize, 1,
    );
}

fn add_bias<T: Real>(out: &mut Tensor<T>, bias: &[T]) {
    for (c, &b) in bias.iter().enumerate() {
        for v in out.channel_mut(c) {
            *v = *v + b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(dout: &Tensor<T>, alpha: T, db: &mut [T]) {
    for (c, g) in db.iter_mut().enumerate() {
        let s: T = dout.channel(c).iter().copied().sum();
        *g = *g + alpha * s;
    }
}

/// Zero-padded "same" cross-correlation plus bias.
pub fn conv_same<T: Real>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    check_channels("conv", input.channels(), p.cin)?;
    let (_, h, w) = input.shape();
    let mut out = Tensor::zeros(p.cout, h, w);
    let ck2 = p.cin * p.k * p.k;
    if p.k == 1 {
        weights_times_col(&p.weights, p.cout, ck2, input.data(), h * w, T::one(), T::zero(), out.data_mut());
    } else {
        let col = im2col(input, p.k);
        weights_times_col(&p.weights, p.cout, ck2, &col, h * w, T::one(), T::zero(), out.data_mut());
    }
    add_bias(&mut out, &p.bias);
    Ok(out)
}

/// 3×3 convolution layer (`p.k` must be 3).
pub fn conv3x3_same<T: Real>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    if p.k != 3 {
        return Err(Error::shape("conv3x3", format!("kernel size {} != 3", p.k)));
    }
    conv_same(input, p)
}

fn columns<T: Real>(x: &Tensor<T>, k: usize) -> std::borrow::Cow<'_, [T]> {
    if k == 1 {
        std::borrow::Cow::Borrowed(x.data())
    } else {
        std::borrow::Cow::Owned(im2col(x, k))
    }
}

fn col_grad_to_input<T: Real>(dcol: Vec<T>, cin: usize, h: usize, w: usize, k: usize) -> Tensor<T> {
    if k == 1 {
        Tensor::from_vec(cin, h, w, dcol).expect("cin*h*w values")
    } else {
        let mut dx = Tensor::zeros(cin, h, w);
        col2im_add(&dcol, &mut dx, k);
        dx
    }
}

/// Backward of [`conv_same`]: accumulates into `grad` and returns the input gradient.
pub fn conv_backward<T: Real>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    dout: &Tensor<T>,
    grad: &mut ConvParams<T>,
) -> Tensor<T> {
    let (cin, h, w) = input.shape();
    let hw = h * w;
    let ck2 = cin * p.k * p.k;
    let col = columns(input, p.k);
    accumulate_weight_grad(dout.data(), p.cout, &col, ck2, hw, T::one(), &mut grad.weights);
    accumulate_bias_grad(dout, T::one(), &mut grad.bias);
    let mut dcol = vec![T::zero(); ck2 * hw];
    accumulate_col_grad(&p.weights, p.cout, ck2, dout.data(), hw, T::one(), &mut dcol);
    col_grad_to_input(dcol, cin, h, w, p.k)
}

/// Complex convolution from real operations:
/// `out_r = W_r∗y_r − W_i∗y_i + b_r`, `out_i = W_r∗y_i + W_i∗y_r + b_i`.
pub fn complex_conv<T: Real>(
    y_r: &Tensor<T>,
    y_i: &Tensor<T>,
    p: &ComplexConvParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if !y_r.same_shape(y_i) {
        return Err(Error::shape(
            "complex conv",
            format!("real part {:?} vs imaginary part {:?}", y_r.shape(), y_i.shape()),
        ));
    }
    check_channels("complex conv", y_r.channels(), p.real.cin)?;
    let (_, h, w) = y_r.shape();
    let hw = h * w;
    let (cout, k) = (p.real.cout, p.real.k);
    let ck2 = p.real.cin * k * k;
    let col_r = columns(y_r, k);
    let col_i = columns(y_i, k);
    let one = T::one();

    let mut out_r = Tensor::zeros(cout, h, w);
    weights_times_col(&p.real.weights, cout, ck2, &col_r, hw, one, T::zero(), out_r.data_mut());
    weights_times_col(&p.imag.weights, cout, ck2, &col_i, hw, -one, one, out_r.data_mut());
    add_bias(&mut out_r, &p.real.bias);

    let mut out_i = Tensor::zeros(cout, h, w);
    weights_times_col(&p.real.weights, cout, ck2, &col_i, hw, one, T::zero(), out_i.data_mut());
    weights_times_col(&p.imag.weights, cout, ck2, &col_r, hw, one, one, out_i.data_mut());
    add_bias(&mut out_i, &p.imag.bias);
    Ok((out_r, out_i))
}

/// Backward of [`complex_conv`]; returns `(d y_r, d y_i)`.
pub fn complex_conv_backward<T: Real>(
    y_r: &Tensor<T>,
    y_i: &Tensor<T>,
    p: &ComplexConvParams<T>,
    g_r: &Tensor<T>,
    g_i: &Tensor<T>,
    grad: &mut ComplexConvParams<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (cin, h, w) = y_r.shape();
    let hw = h * w;
    let (cout, k) = (p.real.cout, p.real.k);
    let ck2 = cin * k * k;
    let col_r = columns(y_r, k);
    let col_i = columns(y_i, k);
    let one = T::one();

    accumulate_weight_grad(g_r.data(), cout, &col_r, ck2, hw, one, &mut grad.real.weights);
    accumulate_weight_grad(g_i.data(), cout, &col_i, ck2, hw, one, &mut grad.real.weights);
    accumulate_weight_grad(g_r.data(), cout, &col_i, ck2, hw, -one, &mut grad.imag.weights);
    accumulate_weight_grad(g_i.data(), cout, &col_r, ck2, hw, one, &mut grad.imag.weights);
    accumulate_bias_grad(g_r, one, &mut grad.real.bias);
    accumulate_bias_grad(g_i, one, &mut grad.imag.bias);

    let mut dcol_r = vec![T::zero(); ck2 * hw];
    accumulate_col_grad(&p.real.weights, cout, ck2, g_r.data(), hw, one, &mut dcol_r);
    accumulate_col_grad(&p.imag.weights, cout, ck2, g_i.data(), hw, one, &mut dcol_r);
    let mut dcol_i = vec![T::zero(); ck2 * hw];
    accumulate_col_grad(&p.imag.weights, cout, ck2, g_r.data(), hw, -one, &mut dcol_i);
    accumulate_col_grad(&p.real.weights, cout, ck2, g_i.data(), hw, one, &mut dcol_i);
    (
        col_grad_to_input(dcol_r, cin, h, w, k),
        col_grad_to_input(dcol_i, cin, h, w, k),
    )
}

pub fn relu<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let mut out = t.clone();
    relu_in_place(&mut out);
    out
}

/// Non-positive and NaN entries become zero.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn relu_in_place<T: Real>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Gate `grad` by the positive entries of a ReLU output.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn relu_backward_in_place<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &o) in grad.data_mut().iter_mut().zip(output.data()) {
        if !(o > T::zero()) {
            *g = T::zero();
        }
    }
}

/// Position of the maximum inside each 2×2 window, row-major (`0..4`).
pub type PoolIndices = Vec<u8>;

fn check_even(stage: &str, t: &Tensor<impl Real>) -> Result<()> {
    if !t.height().is_multiple_of(2) || !t.width().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "{stage} needs even spatial dims, got {}x{}",
            t.height(),
            t.width()
        )));
    }
    Ok(())
}

/// 2×2 stride-2 max pooling. Ties keep the first window position.
pub fn maxpool2<T: Real>(t: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    check_even("maxpool2", t)?;
    let (c, h, w) = t.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut idx = vec![0u8; c * oh * ow];
    for ch in 0..c {
        let src = t.channel(ch);
        for i in 0..oh {
            for j in 0..ow {
                let base = 2 * i * w + 2 * j;
                let cand = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                let mut best = 0;
                for (n, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best] {
                        best = n;
                    }
                }
                let o = (ch * oh + i) * ow + j;
                out.data_mut()[o] = cand[best];
                idx[o] = best as u8;
            }
        }
    }
    Ok((out, idx))
}

pub fn maxpool2_backward<T: Real>(dout: &Tensor<T>, idx: &PoolIndices) -> Tensor<T> {
    let (c, oh, ow) = dout.shape();
    let (h, w) = (oh * 2, ow * 2);
    let mut dx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let o = (ch * oh + i) * ow + j;
                let pos = idx[o] as usize;
                let (dy, dxo) = (pos / 2, pos % 2);
                dx.set(ch, 2 * i + dy, 2 * j + dxo, dout.data()[o]);
            }
        }
    }
    dx
}

/// Stride-2 2×2 transposed convolution: doubles the spatial size.
pub fn upconv2<T: Real>(t: &Tensor<T>, p: &TransposedConvParams<T>) -> Result<Tensor<T>> {
    check_channels("upconv2", t.channels(), p.cin)?;
    let mut out = Tensor::zeros(p.cout, t.height() * 2, t.width() * 2);
    upconv2_accumulate(t, &p.weights, p.cout, T::one(), &mut out);
    add_bias(&mut out, &p.bias);
    Ok(out)
}

/// `out += alpha · upconv(t)` without bias.
fn upconv2_accumulate<T: Real>(t: &Tensor<T>, weights: &[T], cout: usize, alpha: T, out: &mut Tensor<T>) {
    let (cin, h, w) = t.shape();
    let hw = h * w;
    let rows = cout * 4;
    let mut y = vec![T::zero(); rows * hw];
    // y = Wᵀ·x with W viewed as (cin, cout·4).
    T::gemm(rows, cin, hw, alpha, weights, 1, rows as isize, t.data(), hw as isize, 1, T::zero(), &mut y, hw as isize, 1);
    let ow = 2 * w;
    for co in 0..cout {
        let plane = out.channel_mut(co);
        for ab in 0..4 {
            let (a, b) = (ab / 2, ab % 2);
            let src = &y[(co * 4 + ab) * hw..][..hw];
            for i in 0..h {
                let row = &mut plane[(2 * i + a) * ow..][..ow];
                for j in 0..w {
                    row[2 * j + b] = row[2 * j + b] + src[i * w + j];
                }
            }
        }
    }
}

/// Gather `dout` into the `(cout·4, H·W)` layout used by the transposed GEMM.
fn gather_upconv_grad<T: Real>(dout: &Tensor<T>) -> Vec<T> {
    let (cout, oh, ow) = dout.shape();
    let (h, w) = (oh / 2, ow / 2);
    let hw = h * w;
    let mut g = vec![T::zero(); cout * 4 * hw];
    for co in 0..cout {
        let plane = dout.channel(co);
        for ab in 0..4 {
            let (a, b) = (ab / 2, ab % 2);
            let dst = &mut g[(co * 4 + ab) * hw..][..hw];
            for i in 0..h {
                for j in 0..w {
                    dst[i * w + j] = plane[(2 * i + a) * ow + 2 * j + b];
                }
            }
        }
    }
    g
}

fn upconv2_grads<T: Real>(
    input: &Tensor<T>,
    weights: &[T],
    cout: usize,
    g: &[T],
    alpha: T,
    dw: &mut [T],
    dx: &mut Tensor<T>,
) {
    let (cin, h, w) = input.shape();
    let hw = h * w;
    let rows = cout * 4;
    // dW (cin, cout·4) += x · gᵀ
    T::gemm(cin, hw, rows, alpha, input.data(), hw as isize, 1, g, 1, hw as isize, T::one(), dw, rows as isize, 1);
    // dx (cin, hw) += W · g
    T::gemm(cin, rows, hw, alpha, weights, rows as isize, 1, g, hw as isize, 1, T::one(), dx.data_mut(), hw as isize, 1);
}

pub fn upconv2_backward<T: Real>(
    input: &Tensor<T>,
    p: &TransposedConvParams<T>,
    dout: &Tensor<T>,
    grad: &mut TransposedConvParams<T>,
) -> Tensor<T> {
    let g = gather_upconv_grad(dout);
    accumulate_bias_grad(dout, T::one(), &mut grad.bias);
    let mut dx = Tensor::zeros(input.channels(), input.height(), input.width());
    upconv2_grads(input, &p.weights, p.cout, &g, T::one(), &mut grad.weights, &mut dx);
    dx
}

/// Complex transposed convolution, same algebra as [`complex_conv`].
pub fn complex_upconv2<T: Real>(
    y_r: &Tensor<T>,
    y_i: &Tensor<T>,
    real: &TransposedConvParams<T>,
    imag: &TransposedConvParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_channels("complex upconv2", y_r.channels(), real.cin)?;
    let one = T::one();
    let (oh, ow) = (y_r.height() * 2, y_r.width() * 2);
    let mut out_r = Tensor::zeros(real.cout, oh, ow);
    upconv2_accumulate(y_r, &real.weights, real.cout, one, &mut out_r);
    upconv2_accumulate(y_i, &imag.weights, real.cout, -one, &mut out_r);
    add_bias(&mut out_r, &real.bias);
    let mut out_i = Tensor::zeros(real.cout, oh, ow);
    upconv2_accumulate(y_i, &real.weights, real.cout, one, &mut out_i);
    upconv2_accumulate(y_r, &imag.weights, real.cout, one, &mut out_i);
    add_bias(&mut out_i, &imag.bias);
    Ok((out_r, out_i))
}

#[allow(clippy::too_many_arguments)]
pub fn complex_upconv2_backward<T: Real>(
    y_r: &Tensor<T>,
    y_i: &Tensor<T>,
    real: &TransposedConvParams<T>,
    imag: &TransposedConvParams<T>,
    g_r: &Tensor<T>,
    g_i: &Tensor<T>,
    grad_real: &mut TransposedConvParams<T>,
    grad_imag: &mut TransposedConvParams<T>,
) -> (Tensor<T>, Tensor<T>) {
    let one = T::one();
    let gr = gather_upconv_grad(g_r);
    let gi = gather_upconv_grad(g_i);
    accumulate_bias_grad(g_r, one, &mut grad_real.bias);
    accumulate_bias_grad(g_i, one, &mut grad_imag.bias);
    let mut dy_r = Tensor::zeros(y_r.channels(), y_r.height(), y_r.width());
    let mut dy_i = Tensor::zeros(y_i.channels(), y_i.height(), y_i.width());
    let cout = real.cout;
    // out_r = R·y_r − I·y_i ; out_i = R·y_i + I·y_r
    upconv2_grads(y_r, &real.weights, cout, &gr, one, &mut grad_real.weights, &mut dy_r);
    upconv2_grads(y_i, &real.weights, cout, &gi, one, &mut grad_real.weights, &mut dy_i);
    upconv2_grads(y_i, &imag.weights, cout, &gr, -one, &mut grad_imag.weights, &mut dy_i);
    upconv2_grads(y_r, &imag.weights, cout, &gi, one, &mut grad_imag.weights, &mut dy_r);
    (dy_r, dy_i)
}

/// Channel concatenation `[a; b]`.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(
            "concat",
            format!(
                "spatial mismatch {}x{} vs {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            ),
        ));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(a.channels() + b.channels(), a.height(), a.width(), data)
}

/// Split a concatenation gradient back into its `(first, rest)` parts.
pub fn split_channels<T: Real>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    (
        t.slice_channels(0..first),
        t.slice_channels(first..t.channels()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, h, w, rand_vec(rng, c * h * w)).unwrap()
    }

    fn rand_conv(rng: &mut ChaCha8Rng, cout: usize, cin: usize, k: usize) -> ConvParams<f64> {
        ConvParams::new(cout, cin, k, rand_vec(rng, cout * cin * k * k), rand_vec(rng, cout)).unwrap()
    }

    /// Direct nested-loop convolution oracle.
    fn direct_conv(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
        let (cin, h, w) = x.shape();
        let pad = (p.k / 2) as isize;
        let mut out = Tensor::zeros(p.cout, h, w);
        for co in 0..p.cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = p.bias[co];
                    for ci in 0..cin {
                        for ky in 0..p.k {
                            for kx in 0..p.k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                                    acc += p.weight(co, ci, ky, kx) * x.get(ci, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    out.set(co, y, xx, acc);
                }
            }
        }
        out
    }

    fn max_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&mut rng, 1, 6, 7);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let p = ConvParams::new(1, 1, 3, w, vec![0.0]).unwrap();
        assert_eq!(conv3x3_same(&x, &p).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_ones() {
        let x = Tensor::filled(1, 5, 5, 1.0f64);
        let p = ConvParams::new(1, 1, 3, vec![1.0; 9], vec![0.0]).unwrap();
        let out = conv3x3_same(&x, &p).unwrap();
        assert_eq!(out.get(0, 2, 2), 9.0);
        assert_eq!(out.get(0, 0, 0), 4.0);
        assert_eq!(out.get(0, 0, 2), 6.0);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, 3, 8, 8);
        let p = ConvParams::new(2, 3, 3, vec![0.0; 54], vec![0.5, -2.0]).unwrap();
        let out = conv3x3_same(&x, &p).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == 0.5));
        assert!(out.channel(1).iter().all(|&v| v == -2.0));
    }

    #[test]
    fn conv_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (cin, cout, h, w, k) in [(2, 5, 8, 8, 3), (3, 4, 5, 9, 3), (4, 2, 6, 6, 1)] {
            let x = rand_tensor(&mut rng, cin, h, w);
            let p = rand_conv(&mut rng, cout, cin, k);
            assert!(max_diff(&conv_same(&x, &p).unwrap(), &direct_conv(&x, &p)) < 1e-12);
        }
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::<f64>::zeros(3, 8, 8);
        let p = ConvParams::<f64>::zeros(4, 2, 3);
        assert!(matches!(conv3x3_same(&x, &p), Err(Error::Shape { .. })));
    }

    #[test]
    fn complex_scalar_product() {
        let y_r = Tensor::filled(1, 1, 1, 1.0f64);
        let y_i = Tensor::filled(1, 1, 1, 2.0f64);
        let p = ComplexConvParams::new(
            ConvParams::new(1, 1, 1, vec![3.0], vec![0.0]).unwrap(),
            ConvParams::new(1, 1, 1, vec![4.0], vec![0.0]).unwrap(),
        )
        .unwrap();
        let (r, i) = complex_conv(&y_r, &y_i, &p).unwrap();
        assert_eq!((r.data()[0], i.data()[0]), (-5.0, 10.0));
    }

    #[test]
    fn complex_with_zero_imag_weights_is_two_real_convs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y_r = rand_tensor(&mut rng, 2, 8, 8);
        let y_i = rand_tensor(&mut rng, 2, 8, 8);
        let real = rand_conv(&mut rng, 3, 2, 3);
        let mut imag = ConvParams::zeros(3, 2, 3);
        imag.bias = vec![0.0; 3];
        let p = ComplexConvParams::new(real.clone(), imag).unwrap();
        let (r, i) = complex_conv(&y_r, &y_i, &p).unwrap();
        assert!(max_diff(&r, &conv_same(&y_r, &real).unwrap()) < 1e-12);
        let mut real_nobias = real.clone();
        real_nobias.bias = vec![0.0; 3];
        assert!(max_diff(&i, &conv_same(&y_i, &real_nobias).unwrap()) < 1e-12);
    }

    #[test]
    fn complex_matches_complex_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (cin, cout, h, w) = (3, 2, 6, 5);
        let y_r = rand_tensor(&mut rng, cin, h, w);
        let y_i = rand_tensor(&mut rng, cin, h, w);
        let p = ComplexConvParams::new(rand_conv(&mut rng, cout, cin, 3), rand_conv(&mut rng, cout, cin, 3)).unwrap();
        let (r, i) = complex_conv(&y_r, &y_i, &p).unwrap();
        for co in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = Complex64::new(p.real.bias[co], p.imag.bias[co]);
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let (sy, sx) = (sy as usize, sx as usize);
                                let wc = Complex64::new(p.real.weight(co, ci, ky, kx), p.imag.weight(co, ci, ky, kx));
                                acc += wc * Complex64::new(y_r.get(ci, sy, sx), y_i.get(ci, sy, sx));
                            }
                        }
                    }
                    assert!((r.get(co, y, x) - acc.re).abs() < 1e-12);
                    assert!((i.get(co, y, x) - acc.im).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relu_values() {
        let t = Tensor::from_vec(1, 1, 3, vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_block() {
        let t = Tensor::from_vec(1, 2, 2, vec![1.0f64, 5.0, 3.0, 2.0]).unwrap();
        let (out, idx) = maxpool2(&t).unwrap();
        assert_eq!(out.data(), &[5.0]);
        assert_eq!((idx[0] / 2, idx[0] % 2), (0, 1));
        let back = maxpool2_backward(&Tensor::filled(1, 1, 1, 7.0), &idx);
        assert_eq!(back.data(), &[0.0, 7.0, 0.0, 0.0]);
        assert!(matches!(maxpool2(&Tensor::<f64>::zeros(1, 3, 4)), Err(Error::Dimension(_))));
    }

    #[test]
    fn upconv_shape_and_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, 3, 4, 4);
        let mut p = TransposedConvParams::zeros(3, 2);
        p.weights = rand_vec(&mut rng, 24);
        p.bias = vec![0.25, -0.5];
        let out = upconv2(&x, &p).unwrap();
        assert_eq!(out.shape(), (2, 8, 8));
        for co in 0..2 {
            for y in 0..8 {
                for xx in 0..8 {
                    let (i, a, j, b) = (y / 2, y % 2, xx / 2, xx % 2);
                    let want: f64 = p.bias[co]
                        + (0..3).map(|ci| x.get(ci, i, j) * p.weights[((ci * 2 + co) * 2 + a) * 2 + b]).sum::<f64>();
                    assert!((out.get(co, y, xx) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor::filled(2, 4, 4, 1.0f64);
        let b = Tensor::filled(3, 4, 4, 2.0f64);
        let c = concat(&a, &b).unwrap();
        assert_eq!(c.channels(), 5);
        let (x, y) = split_channels(&c, 2);
        assert_eq!((x, y), (a, b));
        assert!(concat(&Tensor::<f64>::zeros(1, 4, 4), &Tensor::zeros(1, 2, 4)).is_err());
    }

    /// Central-difference check of every primitive's backward pass with a
    /// random linear functional `L = <g, f(x)>` as the loss.
    mod gradients {
        use super::*;

        const EPS: f64 = 1e-3;

        fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
            a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
        }

        fn rel_err(a: f64, b: f64) -> f64 {
            (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
        }

        fn check(analytic: f64, f: impl Fn(f64) -> f64) {
            let numeric = (f(EPS) - f(-EPS)) / (2.0 * EPS);
            assert!(rel_err(analytic, numeric) < 1e-6, "analytic {analytic} numeric {numeric}");
        }

        #[test]
        fn conv() {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            for k in [1, 3] {
                let x = rand_tensor(&mut rng, 3, 6, 6);
                let p = rand_conv(&mut rng, 4, 3, k);
                let g = rand_tensor(&mut rng, 4, 6, 6);
                let mut grad = ConvParams::zeros(4, 3, k);
                let dx = conv_backward(&x, &p, &g, &mut grad);
                for i in (0..p.weights.len()).step_by(5) {
                    check(grad.weights[i], |e| {
                        let mut q = p.clone();
                        q.weights[i] += e;
                        dot(&g, &conv_same(&x, &q).unwrap())
                    });
                }
                for i in 0..4 {
                    check(grad.bias[i], |e| {
                        let mut q = p.clone();
                        q.bias[i] += e;
                        dot(&g, &conv_same(&x, &q).unwrap())
                    });
                }
                for i in (0..x.data().len()).step_by(7) {
                    check(dx.data()[i], |e| {
                        let mut y = x.clone();
                        y.data_mut()[i] += e;
                        dot(&g, &conv_same(&y, &p).unwrap())
                    });
                }
            }
        }

        #[test]
        fn complex() {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let y_r = rand_tensor(&mut rng, 2, 5, 5);
            let y_i = rand_tensor(&mut rng, 2, 5, 5);
            let p = ComplexConvParams::new(rand_conv(&mut rng, 3, 2, 3), rand_conv(&mut rng, 3, 2, 3)).unwrap();
            let g_r = rand_tensor(&mut rng, 3, 5, 5);
            let g_i = rand_tensor(&mut rng, 3, 5, 5);
            let loss = |yr: &Tensor<f64>, yi: &Tensor<f64>, q: &ComplexConvParams<f64>| {
                let (r, i) = complex_conv(yr, yi, q).unwrap();
                dot(&g_r, &r) + dot(&g_i, &i)
            };
            let mut grad = ComplexConvParams::new(ConvParams::zeros(3, 2, 3), ConvParams::zeros(3, 2, 3)).unwrap();
            let (dr, di) = complex_conv_backward(&y_r, &y_i, &p, &g_r, &g_i, &mut grad);
            for i in (0..p.real.weights.len()).step_by(3) {
                check(grad.real.weights[i], |e| {
                    let mut q = p.clone();
                    q.real.weights[i] += e;
                    loss(&y_r, &y_i, &q)
                });
                check(grad.imag.weights[i], |e| {
                    let mut q = p.clone();
                    q.imag.weights[i] += e;
                    loss(&y_r, &y_i, &q)
                });
            }
            for i in 0..3 {
                check(grad.imag.bias[i], |e| {
                    let mut q = p.clone();
                    q.imag.bias[i] += e;
                    loss(&y_r, &y_i, &q)
                });
            }
            for i in (0..y_r.data().len()).step_by(4) {
                check(dr.data()[i], |e| {
                    let mut y = y_r.clone();
                    y.data_mut()[i] += e;
                    loss(&y, &y_i, &p)
                });
                check(di.data()[i], |e| {
                    let mut y = y_i.clone();
                    y.data_mut()[i] += e;
                    loss(&y_r, &y, &p)
                });
            }
        }

        #[test]
        fn upconv() {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let x = rand_tensor(&mut rng, 3, 4, 4);
            let mut p = TransposedConvParams::zeros(3, 2);
            p.weights = rand_vec(&mut rng, 24);
            p.bias = rand_vec(&mut rng, 2);
            let g = rand_tensor(&mut rng, 2, 8, 8);
            let mut grad = TransposedConvParams::zeros(3, 2);
            let dx = upconv2_backward(&x, &p, &g, &mut grad);
            for i in 0..24 {
                check(grad.weights[i], |e| {
                    let mut q = p.clone();
                    q.weights[i] += e;
                    dot(&g, &upconv2(&x, &q).unwrap())
                });
            }
            for i in 0..2 {
                check(grad.bias[i], |e| {
                    let mut q = p.clone();
                    q.bias[i] += e;
                    dot(&g, &upconv2(&x, &q).unwrap())
                });
            }
            for i in 0..x.data().len() {
                check(dx.data()[i], |e| {
                    let mut y = x.clone();
                    y.data_mut()[i] += e;
                    dot(&g, &upconv2(&y, &p).unwrap())
                });
            }
        }

        #[test]
        fn complex_upconv() {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let y_r = rand_tensor(&mut rng, 2, 3, 3);
            let y_i = rand_tensor(&mut rng, 2, 3, 3);
            let mk = |rng: &mut ChaCha8Rng| {
                let mut p = TransposedConvParams::zeros(2, 3);
                p.weights = rand_vec(rng, 24);
                p.bias = rand_vec(rng, 3);
                p
            };
            let (re, im) = (mk(&mut rng), mk(&mut rng));
            let g_r = rand_tensor(&mut rng, 3, 6, 6);
            let g_i = rand_tensor(&mut rng, 3, 6, 6);
            let loss = |yr: &Tensor<f64>, yi: &Tensor<f64>, a: &TransposedConvParams<f64>, b: &TransposedConvParams<f64>| {
                let (r, i) = complex_upconv2(yr, yi, a, b).unwrap();
                dot(&g_r, &r) + dot(&g_i, &i)
            };
            let mut gre = TransposedConvParams::zeros(2, 3);
            let mut gim = TransposedConvParams::zeros(2, 3);
            let (dr, di) = complex_upconv2_backward(&y_r, &y_i, &re, &im, &g_r, &g_i, &mut gre, &mut gim);
            for i in 0..24 {
                check(gre.weights[i], |e| {
                    let mut q = re.clone();
                    q.weights[i] += e;
                    loss(&y_r, &y_i, &q, &im)
                });
                check(gim.weights[i], |e| {
                    let mut q = im.clone();
                    q.weights[i] += e;
                    loss(&y_r, &y_i, &re, &q)
                });
            }
            for i in 0..y_r.data().len() {
                check(dr.data()[i], |e| {
                    let mut y = y_r.clone();
                    y.data_mut()[i] += e;
                    loss(&y, &y_i, &re, &im)
                });
                check(di.data()[i], |e| {
                    let mut y = y_i.clone();
                    y.data_mut()[i] += e;
                    loss(&y_r, &y, &re, &im)
                });
            }
        }

        #[test]
        fn pool_and_relu() {
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let x = rand_tensor(&mut rng, 2, 6, 6);
            let g = rand_tensor(&mut rng, 2, 3, 3);
            let (_, idx) = maxpool2(&x).unwrap();
            let dx = maxpool2_backward(&g, &idx);
            for i in 0..x.data().len() {
                check(dx.data()[i], |e| {
                    let mut y = x.clone();
                    y.data_mut()[i] += e;
                    dot(&g, &maxpool2(&y).unwrap().0)
                });
            }
            let g = rand_tensor(&mut rng, 2, 6, 6);
            let out = relu(&x);
            let mut dx = g.clone();
            relu_backward_in_place(&out, &mut dx);
            for i in 0..x.data().len() {
                check(dx.data()[i], |e| {
                    let mut y = x.clone();
                    y.data_mut()[i] += e;
                    dot(&g, &relu(&y))
                });
            }
        }
    }
}
