//! Forward/backward passes for the layer set the two architectures need:
//! strided convolution, fractionally-strided transposed convolution,
//! elementwise nonlinearities, channel concatenation, and a fixed per-channel
//! input scaling. Convolutions run as im2col plus GEMM in f64.

use super::tensor::{shape_err, NnError, Tensor4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;

/// Conv output extent: `floor((in + 2 pad - kernel) / stride) + 1`.
#[inline]
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Transposed-conv output extent: `(in - 1) stride - 2 pad + kernel + out_pad`.
#[inline]
pub fn deconv_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> usize {
    (input - 1) * stride + kernel + out_pad - 2 * pad
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Run `f` with two reusable thread-local buffers resized to `len_a`/`len_b`.
/// Contents are unspecified on entry; callers overwrite fully.
fn with_scratch<R>(len_a: usize, len_b: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        let (a, b) = &mut *scratch;
        a.resize(len_a, 0.0);
        b.resize(len_b, 0.0);
        f(&mut a[..len_a], &mut b[..len_b])
    })
}

/// Gather one sample into column form: row `(c, i, j)`, column `(oh, ow)`,
/// zero where the receptive field leaves the input.
#[allow(clippy::too_many_arguments)]
fn im2col(
    image: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
    col: &mut [f64],
) {
    debug_assert_eq!(col.len(), channels * kh * kw * out_h * out_w);
    let cols = out_h * out_w;
    for c in 0..channels {
        let plane = &image[c * height * width..(c + 1) * height * width];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * cols;
                for oh in 0..out_h {
                    let ih = (oh * stride + i) as isize - pad as isize;
                    let dst = &mut col[row + oh * out_w..row + (oh + 1) * out_w];
                    if ih < 0 || ih >= height as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src_row = &plane[ih as usize * width..(ih as usize + 1) * width];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * stride + j) as isize - pad as isize;
                        *d = if iw < 0 || iw >= width as isize {
                            0.0
                        } else {
                            src_row[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add column form back onto an image (adjoint of [`im2col`]).
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
    image: &mut [f64],
) {
    debug_assert_eq!(image.len(), channels * height * width);
    let cols = out_h * out_w;
    for c in 0..channels {
        let plane = &mut image[c * height * width..(c + 1) * height * width];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * cols;
                for oh in 0..out_h {
                    let ih = (oh * stride + i) as isize - pad as isize;
                    if ih < 0 || ih >= height as isize {
                        continue;
                    }
                    let dst_row = &mut plane[ih as usize * width..(ih as usize + 1) * width];
                    let src = &col[row + oh * out_w..row + (oh + 1) * out_w];
                    for (ow, &v) in src.iter().enumerate() {
                        let iw = (ow * stride + j) as isize - pad as isize;
                        if iw >= 0 && iw < width as isize {
                            dst_row[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha * a . b + beta * c` over row-major buffers with explicit strides.
#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Strided cross-correlation layer. Weight layout `(out_ch, in_ch, kh, kw)`,
/// bias `(out_ch)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Tensor4,
    pub bias: Tensor4,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let fan_in = in_ch * kernel * kernel;
        let mut weight = Tensor4::zeros(out_ch, in_ch, kernel, kernel);
        weight.values = kaiming_uniform(rng, fan_in, weight.len());
        Conv2d {
            in_ch,
            out_ch,
            kh: kernel,
            kw: kernel,
            stride,
            pad,
            weight,
            bias: Tensor4::zeros(out_ch, 1, 1, 1),
        }
    }

    fn check_input(&self, x: &Tensor4) -> Result<(usize, usize), NnError> {
        if x.c != self.in_ch {
            return Err(shape_err(
                "conv forward",
                format!("{} input channels", self.in_ch),
                format!("{} channels", x.c),
            ));
        }
        if x.h + 2 * self.pad < self.kh || x.w + 2 * self.pad < self.kw {
            return Err(shape_err(
                "conv forward",
                format!("input at least {}x{} after padding", self.kh, self.kw),
                format!("{}x{}", x.h, x.w),
            ));
        }
        Ok((
            conv_out_dim(x.h, self.kh, self.stride, self.pad),
            conv_out_dim(x.w, self.kw, self.stride, self.pad),
        ))
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let (oh, ow) = self.check_input(x)?;
        let k = self.in_ch * self.kh * self.kw;
        let cols = oh * ow;
        let mut y = Tensor4::zeros(x.n, self.out_ch, oh, ow);
        with_scratch(k * cols, 0, |col, _| {
            for s in 0..x.n {
                im2col(
                    x.sample(s),
                    self.in_ch,
                    x.h,
                    x.w,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad,
                    oh,
                    ow,
                    col,
                );
                let out = y.sample_mut(s);
                dgemm(
                    self.out_ch,
                    k,
                    cols,
                    1.0,
                    &self.weight.values,
                    k as isize,
                    1,
                    col,
                    cols as isize,
                    1,
                    0.0,
                    out,
                );
                for oc in 0..self.out_ch {
                    let b = self.bias.values[oc];
                    for v in &mut out[oc * cols..(oc + 1) * cols] {
                        *v += b;
                    }
                }
            }
        });
        Ok(y)
    }

    /// Gradients of the loss w.r.t. input, accumulating parameter gradients
    /// into `wgrad`/`bgrad`.
    pub fn backward(
        &self,
        x: &Tensor4,
        grad_out: &Tensor4,
        wgrad: &mut [f64],
        bgrad: &mut [f64],
    ) -> Tensor4 {
        let (oh, ow) = (grad_out.h, grad_out.w);
        debug_assert_eq!(oh, conv_out_dim(x.h, self.kh, self.stride, self.pad));
        debug_assert_eq!(grad_out.c, self.out_ch);
        let k = self.in_ch * self.kh * self.kw;
        let cols = oh * ow;
        let mut grad_in = Tensor4::zeros(x.n, x.c, x.h, x.w);
        with_scratch(k * cols, k * cols, |col, dcol| {
            for s in 0..x.n {
                let dy = grad_out.sample(s);
                im2col(
                    x.sample(s),
                    self.in_ch,
                    x.h,
                    x.w,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad,
                    oh,
                    ow,
                    col,
                );
                // dW += dY . col^T
                dgemm(
                    self.out_ch,
                    cols,
                    k,
                    1.0,
                    dy,
                    cols as isize,
                    1,
                    col,
                    1,
                    cols as isize,
                    1.0,
                    wgrad,
                );
                for oc in 0..self.out_ch {
                    bgrad[oc] += dy[oc * cols..(oc + 1) * cols].iter().sum::<f64>();
                }
                // dcol = W^T . dY, then scatter back to the input grid.
                dgemm(
                    k,
                    self.out_ch,
                    cols,
                    1.0,
                    &self.weight.values,
                    1,
                    k as isize,
                    dy,
                    cols as isize,
                    1,
                    0.0,
                    dcol,
                );
                col2im(
                    dcol,
                    self.in_ch,
                    x.h,
                    x.w,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad,
                    oh,
                    ow,
                    grad_in.sample_mut(s),
                );
            }
        });
        grad_in
    }
}

/// Fractionally-strided (transposed) convolution. Weight layout
/// `(in_ch, out_ch, kh, kw)`; with a shared buffer this is exactly the
/// adjoint of the matching [`Conv2d`].
#[derive(Debug, Clone)]
pub struct Deconv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
    pub weight: Tensor4,
    pub bias: Tensor4,
}

impl Deconv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Deconv2d {
        assert!(out_pad < stride, "output padding must be below stride");
        let fan_in = in_ch * kernel * kernel;
        let mut weight = Tensor4::zeros(in_ch, out_ch, kernel, kernel);
        weight.values = kaiming_uniform(rng, fan_in, weight.len());
        Deconv2d {
            in_ch,
            out_ch,
            kh: kernel,
            kw: kernel,
            stride,
            pad,
            out_pad,
            weight,
            bias: Tensor4::zeros(out_ch, 1, 1, 1),
        }
    }

    fn out_dims(&self, x: &Tensor4) -> Result<(usize, usize), NnError> {
        if x.c != self.in_ch {
            return Err(shape_err(
                "deconv forward",
                format!("{} input channels", self.in_ch),
                format!("{} channels", x.c),
            ));
        }
        Ok((
            deconv_out_dim(x.h, self.kh, self.stride, self.pad, self.out_pad),
            deconv_out_dim(x.w, self.kw, self.stride, self.pad, self.out_pad),
        ))
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let (oh, ow) = self.out_dims(x)?;
        let k2 = self.out_ch * self.kh * self.kw;
        let cols = x.h * x.w;
        let mut y = Tensor4::zeros(x.n, self.out_ch, oh, ow);
        with_scratch(k2 * cols, 0, |col, _| {
            for s in 0..x.n {
                // cols = V^T . x, scattered onto the upsampled grid.
                dgemm(
                    k2,
                    self.in_ch,
                    cols,
                    1.0,
                    &self.weight.values,
                    1,
                    k2 as isize,
                    x.sample(s),
                    cols as isize,
                    1,
                    0.0,
                    col,
                );
                let out = y.sample_mut(s);
                col2im(
                    col,
                    self.out_ch,
                    oh,
                    ow,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad,
                    x.h,
                    x.w,
                    out,
                );
                let plane = oh * ow;
                for oc in 0..self.out_ch {
                    let b = self.bias.values[oc];
                    for v in &mut out[oc * plane..(oc + 1) * plane] {
                        *v += b;
                    }
                }
            }
        });
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &Tensor4,
        grad_out: &Tensor4,
        wgrad: &mut [f64],
        bgrad: &mut [f64],
    ) -> Tensor4 {
        debug_assert_eq!(grad_out.c, self.out_ch);
        let k2 = self.out_ch * self.kh * self.kw;
        let cols = x.h * x.w;
        let plane = grad_out.h * grad_out.w;
        let mut grad_in = Tensor4::zeros(x.n, x.c, x.h, x.w);
        with_scratch(k2 * cols, 0, |dcol, _| {
            for s in 0..x.n {
                let dy = grad_out.sample(s);
                im2col(
                    dy,
                    self.out_ch,
                    grad_out.h,
                    grad_out.w,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad,
                    x.h,
                    x.w,
                    dcol,
                );
                // dV += x . dcol^T
                dgemm(
                    self.in_ch,
                    cols,
                    k2,
                    1.0,
                    x.sample(s),
                    cols as isize,
                    1,
                    dcol,
                    1,
                    cols as isize,
                    1.0,
                    wgrad,
                );
                for oc in 0..self.out_ch {
                    bgrad[oc] += dy[oc * plane..(oc + 1) * plane].iter().sum::<f64>();
                }
                // dx = V . dcol
                dgemm(
                    self.in_ch,
                    k2,
                    cols,
                    1.0,
                    &self.weight.values,
                    k2 as isize,
                    1,
                    dcol,
                    cols as isize,
                    1,
                    0.0,
                    grad_in.sample_mut(s),
                );
            }
        });
        grad_in
    }
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn forward(&self, x: &Tensor4) -> Tensor4 {
        let values = match self {
            Activation::Relu => x.values.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Sigmoid => x.values.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softplus => x.values.iter().map(|&v| softplus(v)).collect(),
        };
        Tensor4::from_values(x.n, x.c, x.h, x.w, values)
    }

    /// `x` is the layer input, `y` its forward output.
    pub fn backward(&self, x: &Tensor4, y: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
        let values = match self {
            Activation::Relu => x
                .values
                .iter()
                .zip(&grad_out.values)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Sigmoid => y
                .values
                .iter()
                .zip(&grad_out.values)
                .map(|(&s, &g)| g * s * (1.0 - s))
                .collect(),
            Activation::Softplus => x
                .values
                .iter()
                .zip(&grad_out.values)
                .map(|(&v, &g)| g * sigmoid(v))
                .collect(),
        };
        Tensor4::from_values(x.n, x.c, x.h, x.w, values)
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Concatenate along the channel axis.
pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4, NnError> {
    assert!(!parts.is_empty());
    let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
    for p in parts {
        if p.n != n || p.h != h || p.w != w {
            return Err(shape_err(
                "concat",
                format!("{n}x_x{h}x{w}"),
                format!("{}x{}x{}x{}", p.n, p.c, p.h, p.w),
            ));
        }
    }
    let c_total: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Tensor4::zeros(n, c_total, h, w);
    let plane = h * w;
    for s in 0..n {
        let dst = out.sample_mut(s);
        let mut offset = 0;
        for p in parts {
            let src = p.sample(s);
            dst[offset..offset + src.len()].copy_from_slice(src);
            offset += src.len();
        }
    }
    let _ = plane;
    Ok(out)
}

/// Split a channel-axis gradient back into per-part gradients (adjoint of
/// [`concat_channels`]).
pub fn split_channels(grad: &Tensor4, channel_sizes: &[usize]) -> Vec<Tensor4> {
    debug_assert_eq!(channel_sizes.iter().sum::<usize>(), grad.c);
    let plane = grad.h * grad.w;
    let mut parts: Vec<Tensor4> = channel_sizes
        .iter()
        .map(|&c| Tensor4::zeros(grad.n, c, grad.h, grad.w))
        .collect();
    for s in 0..grad.n {
        let src = grad.sample(s);
        let mut offset = 0;
        for part in parts.iter_mut() {
            let len = part.c * plane;
            part.sample_mut(s).copy_from_slice(&src[offset..offset + len]);
            offset += len;
        }
    }
    parts
}

/// One layer of a sequential network.
#[derive(Debug, Clone)]
pub enum LayerOp {
    Conv(Conv2d),
    Deconv(Deconv2d),
    Act(Activation),
    /// Fixed per-channel input scaling (no learnable parameters).
    ChannelScale(Vec<f64>),
}

impl LayerOp {
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        match self {
            LayerOp::Conv(conv) => conv.forward(x),
            LayerOp::Deconv(deconv) => deconv.forward(x),
            LayerOp::Act(act) => Ok(act.forward(x)),
            LayerOp::ChannelScale(consts) => {
                if consts.len() != x.c {
                    return Err(shape_err(
                        "channel scale",
                        format!("{} channels", consts.len()),
                        format!("{} channels", x.c),
                    ));
                }
                let mut y = x.clone();
                scale_channels(&mut y, consts);
                Ok(y)
            }
        }
    }

    /// Number of parameter tensors this layer owns (weight + bias or none).
    pub fn param_count(&self) -> usize {
        match self {
            LayerOp::Conv(_) | LayerOp::Deconv(_) => 2,
            _ => 0,
        }
    }

    pub fn params(&self) -> Vec<&Tensor4> {
        match self {
            LayerOp::Conv(conv) => vec![&conv.weight, &conv.bias],
            LayerOp::Deconv(deconv) => vec![&deconv.weight, &deconv.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor4> {
        match self {
            LayerOp::Conv(conv) => vec![&mut conv.weight, &mut conv.bias],
            LayerOp::Deconv(deconv) => vec![&mut deconv.weight, &mut deconv.bias],
            _ => vec![],
        }
    }

    /// Backward through this layer; `pgrads` must hold one buffer per
    /// parameter tensor (empty slice for parameter-free layers).
    pub fn backward(
        &self,
        x: &Tensor4,
        y: &Tensor4,
        grad_out: &Tensor4,
        pgrads: &mut [Vec<f64>],
    ) -> Tensor4 {
        match self {
            LayerOp::Conv(conv) => {
                let (wgrad, bgrad) = pgrads.split_at_mut(1);
                conv.backward(x, grad_out, &mut wgrad[0], &mut bgrad[0])
            }
            LayerOp::Deconv(deconv) => {
                let (wgrad, bgrad) = pgrads.split_at_mut(1);
                deconv.backward(x, grad_out, &mut wgrad[0], &mut bgrad[0])
            }
            LayerOp::Act(act) => act.backward(x, y, grad_out),
            LayerOp::ChannelScale(consts) => {
                let mut g = grad_out.clone();
                scale_channels(&mut g, consts);
                g
            }
        }
    }
}

fn scale_channels(t: &mut Tensor4, consts: &[f64]) {
    let plane = t.h * t.w;
    let c = t.c;
    for s in 0..t.n {
        let data = t.sample_mut(s);
        for (ch, &k) in consts.iter().enumerate().take(c) {
            for v in &mut data[ch * plane..(ch + 1) * plane] {
                *v *= k;
            }
        }
    }
}

/// A plain layer stack with explicit activation storage for backward.
#[derive(Debug, Clone)]
pub struct SequentialNet {
    pub layers: Vec<LayerOp>,
}

impl SequentialNet {
    pub fn new(layers: Vec<LayerOp>) -> SequentialNet {
        SequentialNet { layers }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass retaining every intermediate: `acts[0]` is the input,
    /// `acts[i + 1]` the output of layer `i`.
    pub fn forward_collect(&self, x: Tensor4) -> Result<Vec<Tensor4>, NnError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let y = layer.forward(acts.last().unwrap())?;
            acts.push(y);
        }
        Ok(acts)
    }

    /// Backward through the whole stack, accumulating parameter gradients
    /// into `pgrads` (one buffer per parameter tensor, net order). Returns
    /// the gradient w.r.t. the network input.
    pub fn backward(
        &self,
        acts: &[Tensor4],
        grad_out: Tensor4,
        pgrads: &mut [Vec<f64>],
    ) -> Tensor4 {
        debug_assert_eq!(acts.len(), self.layers.len() + 1);
        debug_assert_eq!(pgrads.len(), self.param_lens().len());
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let mut grad = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let slice = &mut pgrads[offsets[i]..offsets[i] + layer.param_count()];
            grad = layer.backward(&acts[i], &acts[i + 1], &grad, slice);
        }
        grad
    }

    pub fn params(&self) -> Vec<&Tensor4> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor4> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    /// Fresh zeroed gradient buffers matching [`SequentialNet::param_lens`].
    pub fn zero_grad_buffers(&self) -> Vec<Vec<f64>> {
        self.param_lens().into_iter().map(|n| vec![0.0; n]).collect()
    }

    /// Add external gradient buffers into the parameters' own grad slots.
    pub fn accumulate_grads(&mut self, grads: &[Vec<f64>]) {
        for (param, buf) in self.params_mut().into_iter().zip(grads) {
            let g = param.grad_mut();
            for (dst, src) in g.iter_mut().zip(buf) {
                *dst += src;
            }
        }
    }

    /// Flat copy of all parameter values (freeze checks, byte comparisons).
    pub fn snapshot(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1234)
    }

    #[test]
    fn identity_one_by_one_conv_preserves_input() {
        let mut conv = Conv2d::new(1, 1, 1, 1, 0, &mut rng());
        conv.weight.values = vec![1.0];
        conv.bias.values = vec![0.0];
        let x = Tensor4::from_values(1, 1, 2, 3, vec![0.5, -1.0, 2.0, 3.0, -4.0, 0.25]);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.values, x.values);
    }

    #[test]
    fn conv_dims_follow_formula() {
        let conv = Conv2d::new(3, 8, 3, 2, 1, &mut rng());
        let x = Tensor4::zeros(2, 3, 64, 64);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dims(), (2, 8, 32, 32));
    }

    #[test]
    fn conv_hand_computed_sums() {
        // 3x3 input, 2x2 all-ones kernel, stride 1 no pad: each output is the
        // sum of its 2x2 window.
        let mut conv = Conv2d::new(1, 1, 2, 1, 0, &mut rng());
        conv.weight.values = vec![1.0; 4];
        conv.bias.values = vec![0.5];
        let x = Tensor4::from_values(
            1,
            1,
            3,
            3,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        );
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.values, vec![12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn relu_zeroes_negative_input() {
        let x = Tensor4::from_values(1, 1, 1, 4, vec![-1.0, -0.5, -2.0, -1e-9]);
        let y = Activation::Relu.forward(&x);
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_gradient_factor_at_zero_is_quarter() {
        let x = Tensor4::from_values(1, 1, 1, 1, vec![0.0]);
        let y = Activation::Sigmoid.forward(&x);
        let g = Tensor4::from_values(1, 1, 1, 1, vec![1.0]);
        let gi = Activation::Sigmoid.backward(&x, &y, &g);
        assert_relative_eq!(gi.values[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn deconv_inverts_conv_dims() {
        let conv = Conv2d::new(4, 8, 3, 2, 1, &mut rng());
        let deconv = Deconv2d::new(8, 4, 3, 2, 1, 1, &mut rng());
        let x = Tensor4::zeros(1, 4, 32, 32);
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.dims(), (1, 8, 16, 16));
        let z = deconv.forward(&y).unwrap();
        assert_eq!(z.dims(), (1, 4, 32, 32));
    }

    #[test]
    fn conv_deconv_adjointness() {
        // <conv(x), y> == <x, deconv(y)> when the deconv shares the conv's
        // kernel buffer and both have zero bias.
        let mut r = rng();
        for &(in_ch, out_ch, k, stride, pad, h, w) in &[
            (2usize, 3usize, 3usize, 2usize, 1usize, 7usize, 9usize),
            (1, 2, 2, 1, 0, 5, 5),
            (3, 1, 3, 2, 0, 8, 6),
        ] {
            let conv = Conv2d::new(in_ch, out_ch, k, stride, pad, &mut r);
            let oh = conv_out_dim(h, k, stride, pad);
            let ow = conv_out_dim(w, k, stride, pad);
            let out_pad_h = (h + 2 * pad - k) % stride;
            // Keep test shapes square in the stride remainder so one out_pad
            // works for both axes.
            assert_eq!(out_pad_h, (w + 2 * pad - k) % stride);
            let mut deconv = Deconv2d::new(out_ch, in_ch, k, stride, pad, out_pad_h, &mut r);
            deconv.weight.values = conv.weight.values.clone();
            deconv.bias.values.iter_mut().for_each(|v| *v = 0.0);
            let mut conv0 = conv.clone();
            conv0.bias.values.iter_mut().for_each(|v| *v = 0.0);

            let x = Tensor4::from_values(
                1,
                in_ch,
                h,
                w,
                (0..in_ch * h * w).map(|i| (i as f64 * 0.31).sin()).collect(),
            );
            let y = Tensor4::from_values(
                1,
                out_ch,
                oh,
                ow,
                (0..out_ch * oh * ow)
                    .map(|i| (i as f64 * 0.17).cos())
                    .collect(),
            );
            let cx = conv0.forward(&x).unwrap();
            let dy = deconv.forward(&y).unwrap();
            assert_eq!(dy.dims(), x.dims());
            let lhs: f64 = cx.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.values.iter().zip(&dy.values).map(|(a, b)| a * b).sum();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-6);
        }
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor4::from_values(2, 1, 2, 2, (0..8).map(|i| i as f64).collect());
        let b = Tensor4::from_values(2, 2, 2, 2, (0..16).map(|i| i as f64 + 100.0).collect());
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.dims(), (2, 3, 2, 2));
        assert_eq!(cat.at(0, 0, 0, 0), 0.0);
        assert_eq!(cat.at(0, 1, 0, 0), 100.0);
        assert_eq!(cat.at(1, 0, 0, 0), 4.0);
        let parts = split_channels(&cat, &[1, 2]);
        assert_eq!(parts[0].values, a.values);
        assert_eq!(parts[1].values, b.values);
    }

    #[test]
    fn channel_scale_applies_per_channel() {
        let x = Tensor4::from_values(1, 2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let layer = LayerOp::ChannelScale(vec![1.0, 0.5]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.values, vec![1.0, 2.0, 1.5, 2.0]);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let conv = Conv2d::new(3, 8, 3, 1, 1, &mut rng());
        let x = Tensor4::zeros(1, 2, 8, 8);
        match conv.forward(&x) {
            Err(NnError::ShapeMismatch {
                expected, actual, ..
            }) => {
                assert!(expected.contains('3'));
                assert!(actual.contains('2'));
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let conv = Conv2d::new(2, 3, 3, 1, 1, &mut rng());
        let x = Tensor4::from_values(1, 2, 4, 4, (0..32).map(|i| i as f64 * 0.1).collect());
        let y = conv.forward(&x).unwrap();
        let zero = Tensor4::zeros(y.n, y.c, y.h, y.w);
        let mut wgrad = vec![0.0; conv.weight.len()];
        let mut bgrad = vec![0.0; conv.bias.len()];
        let gi = conv.backward(&x, &zero, &mut wgrad, &mut bgrad);
        assert!(gi.values.iter().all(|&v| v == 0.0));
        assert!(wgrad.iter().all(|&v| v == 0.0));
        assert!(bgrad.iter().all(|&v| v == 0.0));
    }
}
