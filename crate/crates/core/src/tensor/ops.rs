use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this many multiply-accumulates a convolution runs on the calling thread.
const PARALLEL_MACS: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dParams {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            stride,
            padding,
            groups,
        }
    }
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self::new(1, 0, 1)
    }
}

/// Output extent of a convolution along one axis, `None` when it would be empty.
pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Direct 2-D convolution over a `[C_in, H, W]` input with a
/// `[C_out, C_in / groups, K_h, K_w]` kernel.
///
/// Every output element accumulates bias first, then input channels, kernel
/// rows and kernel columns in ascending order, so results do not depend on
/// how output channels are scheduled across threads.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: Conv2dParams,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    let Conv2dParams {
        stride,
        padding,
        groups,
    } = params;
    let (c_in, h, w) = match input.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::shape(OP, format!("input must be [C,H,W], got {s:?}"))),
    };
    let (c_out, cin_g, kh, kw) = match weight.shape() {
        &[o, i, kh, kw] => (o, i, kh, kw),
        s => return Err(Error::shape(OP, format!("weight must be [C_out,C_in/g,K,K], got {s:?}"))),
    };
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
        return Err(Error::shape(
            OP,
            format!("channels in={c_in} out={c_out} not divisible by groups={groups}"),
        ));
    }
    if cin_g != c_in / groups {
        return Err(Error::shape(
            OP,
            format!("weight expects {cin_g} channels per group, input provides {}", c_in / groups),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::shape(OP, format!("bias shape {:?}, expected [{c_out}]", b.shape())));
        }
    }
    let (ho, wo) = match (
        conv_out_dim(h, kh, stride, padding),
        conv_out_dim(w, kw, stride, padding),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::shape(
                OP,
                format!("empty output for input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {padding}"),
            ))
        }
    };

    let cout_g = c_out / groups;
    let x = input.data();
    let wt = weight.data();
    let plane = ho * wo;
    let mut out = vec![T::zero(); c_out * plane];

    // Valid output columns for each kernel column: those whose input column is in bounds.
    let col_ranges: Vec<(usize, usize)> = (0..kw)
        .map(|kx| valid_range(wo, w, kx, stride, padding))
        .collect();
    let row_ranges: Vec<(usize, usize)> = (0..kh)
        .map(|ky| valid_range(ho, h, ky, stride, padding))
        .collect();

    let compute = |co: usize, dst: &mut [T]| {
        let init = bias.map_or(T::zero(), |b| b.data()[co]);
        dst.iter_mut().for_each(|v| *v = init);
        let g = co / cout_g;
        for cig in 0..cin_g {
            let ci = g * cin_g + cig;
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = row_ranges[ky];
                for kx in 0..kw {
                    let k = wt[((co * cin_g + cig) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = col_ranges[kx];
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let out_row = &mut dst[oy * wo + ox_lo..oy * wo + ox_hi];
                        let ix0 = ox_lo * stride + kx - padding;
                        let in_row = &src[iy * w..(iy + 1) * w];
                        if stride == 1 {
                            let in_seg = &in_row[ix0..ix0 + out_row.len()];
                            for (o, &i) in out_row.iter_mut().zip(in_seg) {
                                *o += k * i;
                            }
                        } else {
                            for (j, o) in out_row.iter_mut().enumerate() {
                                *o += k * in_row[ix0 + j * stride];
                            }
                        }
                    }
                }
            }
        }
    };

    let macs = c_out * plane * cin_g * kh * kw;
    if macs >= PARALLEL_MACS {
        out.par_chunks_mut(plane)
            .enumerate()
            .for_each(|(co, dst)| compute(co, dst));
    } else {
        out.chunks_mut(plane)
            .enumerate()
            .for_each(|(co, dst)| compute(co, dst));
    }
    Tensor::new(vec![c_out, ho, wo], out)
}

/// Half-open range of output positions whose input index `o*stride + k - padding`
/// falls inside `[0, input)`.
fn valid_range(out: usize, input: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    let hi = if input + padding > k {
        ((input - 1 + padding - k) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Inference-mode batch normalization parameters, each of length `C`.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormParams<'a, T> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
    pub eps: T,
}

pub fn batchnorm2d<T: Scalar>(input: &Tensor<T>, p: BatchNormParams<'_, T>) -> Result<Tensor<T>> {
    const OP: &str = "batchnorm2d";
    let c = match input.shape() {
        &[c, _, _] => c,
        s => return Err(Error::shape(OP, format!("input must be [C,H,W], got {s:?}"))),
    };
    for (what, t) in [
        ("gamma", p.gamma),
        ("beta", p.beta),
        ("running_mean", p.running_mean),
        ("running_var", p.running_var),
    ] {
        if t.shape() != [c] {
            return Err(Error::shape(OP, format!("{what} has shape {:?}, expected [{c}]", t.shape())));
        }
    }
    if p.eps < T::zero() {
        return Err(Error::invalid(OP, "eps must be non-negative"));
    }
    let plane = input.numel() / c;
    let mut out = input.data().to_vec();
    for (ch, dst) in out.chunks_mut(plane).enumerate() {
        let scale = p.gamma.data()[ch] / (p.running_var.data()[ch] + p.eps).sqrt();
        let mean = p.running_mean.data()[ch];
        let shift = p.beta.data()[ch];
        for v in dst {
            *v = (*v - mean) * scale + shift;
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Normalizes each vector along the last axis, then applies `gamma` and `beta`.
/// Variance is the biased (population) estimate.
pub fn layernorm<T: Scalar>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    const OP: &str = "layernorm";
    let d = input.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(
            OP,
            format!("gamma {:?} / beta {:?} do not match last dim {d}", gamma.shape(), beta.shape()),
        ));
    }
    let n = T::lit(d as f64);
    let mut out = input.data().to_vec();
    for row in out.chunks_mut(d) {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let denom = (var + eps).sqrt();
        let inv = if denom > T::zero() { T::one() / denom } else { T::zero() };
        for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn silu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| x * sigmoid(x))
}

/// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
/// Agrees with the erf form to within 1e-3 absolute.
pub fn gelu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    input
        .map(|x| half * x * (T::one() + (c * (x + a * x * x * x)).tanh()))
        
}

/// Softmax over the last axis with max subtraction.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let d = input.last_dim();
    let mut out = input.data().to_vec();
    for row in out.chunks_mut(d) {
        softmax_in_place(row);
    }
    Tensor {
        shape: input.shape().to_vec(),
        data: out,
    }
    
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Affine map over the last axis. `weight` is `[D_out, D_in]`.
pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    const OP: &str = "linear";
    let (d_out, d_in) = match weight.shape() {
        &[o, i] => (o, i),
        s => return Err(Error::shape(OP, format!("weight must be [D_out,D_in], got {s:?}"))),
    };
    if input.last_dim() != d_in {
        return Err(Error::shape(
            OP,
            format!("input last dim {} does not match weight D_in {d_in}", input.last_dim()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::shape(OP, format!("bias shape {:?}, expected [{d_out}]", b.shape())));
        }
    }
    // Transposed copy so the inner loop runs over contiguous outputs.
    let w = weight.data();
    let mut wt = vec![T::zero(); d_in * d_out];
    for o in 0..d_out {
        for i in 0..d_in {
            wt[i * d_out + o] = w[o * d_in + i];
        }
    }
    let rows = input.numel() / d_in;
    let mut out = vec![T::zero(); rows * d_out];
    let run = |(x, y): (&[T], &mut [T])| {
        match bias {
            Some(b) => y.copy_from_slice(b.data()),
            None => y.iter_mut().for_each(|v| *v = T::zero()),
        }
        for (i, &xi) in x.iter().enumerate() {
            let col = &wt[i * d_out..(i + 1) * d_out];
            for (o, &wv) in y.iter_mut().zip(col) {
                *o += xi * wv;
            }
        }
    };
    if rows * d_in * d_out >= PARALLEL_MACS {
        input
            .data()
            .par_chunks(d_in)
            .zip(out.par_chunks_mut(d_out))
            .for_each(run);
    } else {
        input.data().chunks(d_in).zip(out.chunks_mut(d_out)).for_each(run);
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = d_out;
    Tensor::new(shape, out)
}

/// Mean over the spatial axes of a `[C,H,W]` tensor.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let c = match input.shape() {
        &[c, _, _] => c,
        s => return Err(Error::shape("global_avg_pool", format!("input must be [C,H,W], got {s:?}"))),
    };
    let plane = input.numel() / c;
    let n = T::lit(plane as f64);
    let data = input
        .data()
        .chunks(plane)
        .map(|p| p.iter().copied().sum::<T>() / n)
        .collect();
    Tensor::new(vec![c], data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("add", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Stacks two `[C_i,H,W]` tensors along the channel axis, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    match (a.shape(), b.shape()) {
        (&[ca, ha, wa], &[cb, hb, wb]) if ha == hb && wa == wb => {
            let mut data = Vec::with_capacity(a.numel() + b.numel());
            data.extend_from_slice(a.data());
            data.extend_from_slice(b.data());
            Tensor::new(vec![ca + cb, ha, wa], data)
        }
        (sa, sb) => Err(Error::shape("concat_channels", format!("{sa:?} vs {sb:?}"))),
    }
}

/// Bilinear resampling of a `[C,H,W]` tensor with half-pixel centers
/// (source coordinate `(dst + 0.5)·in/out − 0.5`, clamped at 0).
pub fn resize_bilinear<T: Scalar>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    const OP: &str = "resize_bilinear";
    let (c, h, w) = match input.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::shape(OP, format!("input must be [C,H,W], got {s:?}"))),
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(OP, "output size must be positive"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for plane in input.data().chunks(h * w) {
        for &(y0, y1, fy) in &ys {
            let fy = T::lit(fy);
            for &(x0, x1, fx) in &xs {
                let fx = T::lit(fx);
                let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (T::one() - fy) + bot * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// For each output index: the two source indices and the weight of the second.
pub(crate) fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
