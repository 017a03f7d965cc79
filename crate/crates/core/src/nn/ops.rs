use alloc::vec;
use alloc::vec::Vec;

use super::{Activation, Padding};
use crate::error::{structural, Result};
use crate::tensor::{Scalar, Tensor};

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax over each row of length `cols`, max-subtracted.
pub fn softmax_rows<T: Scalar>(data: &mut [T], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in data.chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut out = logits.to_vec();
    softmax_rows(&mut out, logits.len());
    out
}

/// Applies `act` elementwise (or per row of `row_len` for softmax).
pub fn apply_activation<T: Scalar>(data: &mut [T], act: Activation, row_len: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => data.iter_mut().for_each(|v| *v = relu(*v)),
        Activation::Sigmoid => data.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softmax => softmax_rows(data, row_len),
    }
}

/// Leading (top, left) zero padding for a stride-1 "same" convolution.
///
/// An even kernel puts the extra row/column after the image.
pub const fn same_padding(kernel: [usize; 2]) -> [usize; 2] {
    [(kernel[0] - 1) / 2, (kernel[1] - 1) / 2]
}

/// Output extent of a pooling window sweep; partial windows are dropped.
pub(crate) fn pool_output_extent(
    extent: usize,
    window: usize,
    stride: usize,
) -> core::result::Result<usize, alloc::string::String> {
    if window == 0 || stride == 0 {
        return Err(alloc::format!("pool window {window} and stride {stride} must be positive"));
    }
    if window > extent {
        return Err(alloc::format!("pool window {window} larger than input extent {extent}"));
    }
    Ok((extent - window) / stride + 1)
}

fn dims4<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(structural!("{what} must be rank 4, got shape {s:?}")),
    }
}

/// Geometry of a stride-1 convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: [usize; 2],
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 4], kernel: [usize; 2], padding: Padding) -> Result<Self> {
        let [n, h, w, c] = input;
        let [kh, kw] = kernel;
        let (oh, ow, pad) = match padding {
            Padding::Same => (h, w, same_padding(kernel)),
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(structural!("kernel {kh}x{kw} larger than input {h}x{w}"));
                }
                (h - kh + 1, w - kw + 1, [0, 0])
            }
        };
        Ok(Self { n, h, w, c, kh, kw, pad, oh, ow })
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.c
    }

    pub fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

/// Unrolls every receptive field into a row of `kh·kw·c` values ordered
/// `(dy, dx, channel)`, matching the filter layout. Out-of-image taps are 0.
pub(crate) fn im2col<T: Scalar>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.patch_len();
    let mut cols = vec![T::zero(); g.rows() * k];
    let row_span = g.kw * g.c;
    for b in 0..g.n {
        let image = &input[b * g.h * g.w * g.c..(b + 1) * g.h * g.w * g.c];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((b * g.oh + oy) * g.ow + ox) * k;
                let patch = &mut cols[row..row + k];
                for dy in 0..g.kh {
                    let iy = (oy + dy) as isize - g.pad[0] as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let iy = iy as usize;
                    let x0 = ox as isize - g.pad[1] as isize;
                    if x0 >= 0 && x0 as usize + g.kw <= g.w {
                        let src = (iy * g.w + x0 as usize) * g.c;
                        patch[dy * row_span..(dy + 1) * row_span]
                            .copy_from_slice(&image[src..src + row_span]);
                    } else {
                        for dx in 0..g.kw {
                            let ix = x0 + dx as isize;
                            if ix < 0 || ix as usize >= g.w {
                                continue;
                            }
                            let src = (iy * g.w + ix as usize) * g.c;
                            let dst = (dy * g.kw + dx) * g.c;
                            patch[dst..dst + g.c].copy_from_slice(&image[src..src + g.c]);
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub(crate) fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.patch_len();
    let mut out = vec![T::zero(); g.n * g.h * g.w * g.c];
    for b in 0..g.n {
        let image = &mut out[b * g.h * g.w * g.c..(b + 1) * g.h * g.w * g.c];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((b * g.oh + oy) * g.ow + ox) * k;
                let patch = &cols[row..row + k];
                for dy in 0..g.kh {
                    let iy = (oy + dy) as isize - g.pad[0] as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for dx in 0..g.kw {
                        let ix = (ox + dx) as isize - g.pad[1] as isize;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        let dst = (iy as usize * g.w + ix as usize) * g.c;
                        let src = (dy * g.kw + dx) * g.c;
                        for ch in 0..g.c {
                            image[dst + ch] = image[dst + ch] + patch[src + ch];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Stride-1 convolution of an NHWC batch with a `[f, kh, kw, c]` filter bank.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    padding: Padding,
    activation: Activation,
) -> Result<Tensor<T>> {
    let dims = dims4(input, "conv input")?;
    let [f, kh, kw, fc] = dims4(filters, "conv filters")?;
    if fc != dims[3] {
        return Err(structural!(
            "filters expect {fc} input channels, input has {}",
            dims[3]
        ));
    }
    let g = ConvGeometry::new(dims, [kh, kw], padding)?;
    let k = g.patch_len();
    let rows = g.rows();
    let mut out = vec![T::zero(); rows * f];
    if kh == 1 && kw == 1 {
        T::matmul(rows, k, f, input.data(), (k, 1), filters.data(), (1, k), &mut out, (f, 1));
    } else {
        let cols = im2col(input.data(), &g);
        T::matmul(rows, k, f, &cols, (k, 1), filters.data(), (1, k), &mut out, (f, 1));
    }
    apply_activation(&mut out, activation, f);
    Tensor::new([g.n, g.oh, g.ow, f], out)
}

fn pool<T: Scalar>(
    input: &Tensor<T>,
    window: [usize; 2],
    stride: [usize; 2],
    init: T,
    combine: impl Fn(T, T) -> T,
    finish: impl Fn(T) -> T,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims4(input, "pool input")?;
    let oh = pool_output_extent(h, window[0], stride[0]).map_err(crate::Error::Structural)?;
    let ow = pool_output_extent(w, window[1], stride[1]).map_err(crate::Error::Structural)?;
    let x = input.data();
    let mut out = vec![init; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = ((b * oh + oy) * ow + ox) * c;
                let acc = &mut out[dst..dst + c];
                for dy in 0..window[0] {
                    let iy = oy * stride[0] + dy;
                    for dx in 0..window[1] {
                        let ix = ox * stride[1] + dx;
                        let src = ((b * h + iy) * w + ix) * c;
                        for (a, &v) in acc.iter_mut().zip(&x[src..src + c]) {
                            *a = combine(*a, v);
                        }
                    }
                }
                acc.iter_mut().for_each(|a| *a = finish(*a));
            }
        }
    }
    Tensor::new([n, oh, ow, c], out)
}

pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: [usize; 2], stride: [usize; 2]) -> Result<Tensor<T>> {
    pool(input, window, stride, T::neg_infinity(), T::max, |v| v)
}

pub fn avgpool2d<T: Scalar>(input: &Tensor<T>, window: [usize; 2], stride: [usize; 2]) -> Result<Tensor<T>> {
    let scale = T::one() / T::from_f64((window[0] * window[1]) as f64);
    pool(input, window, stride, T::zero(), |a, v| a + v, |a| a * scale)
}

/// `out[b, j] = act(Σ_k in[b, k] · w[k, j])` for `[in, out]` weights.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, activation: Activation) -> Result<Tensor<T>> {
    let (n, i) = match *input.shape() {
        [n, i] => (n, i),
        ref s => return Err(structural!("dense input must be rank 2, got {s:?}")),
    };
    let (wi, o) = match *weights.shape() {
        [a, b] => (a, b),
        ref s => return Err(structural!("dense weights must be rank 2, got {s:?}")),
    };
    if wi != i {
        return Err(structural!("dense layer expects {wi} inputs, got {i}"));
    }
    let mut out = vec![T::zero(); n * o];
    T::matmul(n, i, o, input.data(), (i, 1), weights.data(), (o, 1), &mut out, (o, 1));
    apply_activation(&mut out, activation, o);
    Tensor::new([n, o], out)
}
