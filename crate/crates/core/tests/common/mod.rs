#![allow(dead_code)]

use std::sync::Arc;

use accordion_core::nn::{Activation, Conv2d, Dense, LayerSpec, NetworkSpec, Padding, Pool2d};
use accordion_core::Tensor;
use accordion_core::rng::RngStream;
use rand::Rng;

/// A random valid architecture: up to two conv(+pool) stages, flatten and
/// one or two dense layers ending in softmax.
pub fn random_spec(seed: u64) -> Arc<NetworkSpec> {
    let mut rng = RngStream::new(seed, 0);
    let (mut h, mut w) = (rng.random_range(2..=8), rng.random_range(2..=8));
    let mut c = rng.random_range(1..=3);
    let input = [h, w, c];
    let mut layers = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let kernel = [rng.random_range(1..=h.min(3)), rng.random_range(1..=w.min(3))];
        let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
        let filters = rng.random_range(1..=4);
        let activation = [Activation::Relu, Activation::Sigmoid, Activation::Linear][rng.random_range(0..3)];
        layers.push(LayerSpec::Conv2d(Conv2d { filters, kernel, in_channels: c, padding, activation }));
        if padding == Padding::Valid {
            h = h - kernel[0] + 1;
            w = w - kernel[1] + 1;
        }
        c = filters;
        if h >= 2 && w >= 2 && rng.random_bool(0.5) {
            let p = Pool2d::square(2);
            layers.push(if rng.random_bool(0.5) { LayerSpec::MaxPool2d(p) } else { LayerSpec::AvgPool2d(p) });
            h /= 2;
            w /= 2;
        }
    }
    layers.push(LayerSpec::Flatten);
    let mut features = h * w * c;
    if rng.random_bool(0.5) {
        let out = rng.random_range(1..=6);
        let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid };
        layers.push(LayerSpec::Dense(Dense { in_features: features, out_features: out, activation }));
        features = out;
    }
    let classes = rng.random_range(2..=4);
    layers.push(LayerSpec::Dense(Dense { in_features: features, out_features: classes, activation: Activation::Softmax }));
    let spec = NetworkSpec { name: format!("random-{seed}"), input, class_count: classes, layers };
    spec.validate().expect("generator only builds valid specs");
    Arc::new(spec)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Linear | Activation::Softmax => x,
        Activation::Relu => x.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
    }
}

/// Nested-loop convolution over one NHWC batch; filters `[f, kh, kw, c]`.
pub fn conv_oracle(x: &Tensor<f64>, f: &Tensor<f64>, padding: Padding, a: Activation) -> (Vec<usize>, Vec<f64>) {
    let [n, h, w, c] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [nf, kh, kw, _] = [f.shape()[0], f.shape()[1], f.shape()[2], f.shape()[3]];
    let (oh, ow, pt, pl) = match padding {
        Padding::Same => (h, w, (kh - 1) / 2, (kw - 1) / 2),
        Padding::Valid => (h - kh + 1, w - kw + 1, 0, 0),
    };
    let xd = x.data();
    let fd = f.data();
    let mut out = Vec::with_capacity(n * oh * ow * nf);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for k in 0..nf {
                    let mut s = 0.0;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = oy as isize + dy as isize - pt as isize;
                            let ix = ox as isize + dx as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ch in 0..c {
                                s += xd[((b * h + iy as usize) * w + ix as usize) * c + ch]
                                    * fd[((k * kh + dy) * kw + dx) * c + ch];
                            }
                        }
                    }
                    out.push(act(a, s));
                }
            }
        }
    }
    (vec![n, oh, ow, nf], out)
}

pub fn pool_oracle(x: &Tensor<f64>, window: [usize; 2], stride: [usize; 2], max: bool) -> (Vec<usize>, Vec<f64>) {
    let [n, h, w, c] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let oh = (h - window[0]) / stride[0] + 1;
    let ow = (w - window[1]) / stride[1] + 1;
    let mut out = Vec::new();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let vals: Vec<f64> = (0..window[0])
                        .flat_map(|dy| (0..window[1]).map(move |dx| (dy, dx)))
                        .map(|(dy, dx)| x.data()[((b * h + oy * stride[0] + dy) * w + ox * stride[1] + dx) * c + ch])
                        .collect();
                    out.push(if max {
                        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    });
                }
            }
        }
    }
    (vec![n, oh, ow, c], out)
}

pub fn dense_oracle(x: &Tensor<f64>, wt: &Tensor<f64>, a: Activation) -> Vec<f64> {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = wt.shape()[1];
    let mut out = Vec::new();
    for b in 0..n {
        let mut row: Vec<f64> =
            (0..o).map(|j| (0..i).map(|k| x.data()[b * i + k] * wt.data()[k * o + j]).sum()).collect();
        if a == Activation::Softmax {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            row.iter_mut().for_each(|v| *v = (*v - m).exp() / z);
        } else {
            row.iter_mut().for_each(|v| *v = act(a, *v));
        }
        out.extend(row);
    }
    out
}

pub fn assert_close(got: &[f64], want: &[f64], rel: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= rel * w.abs().max(1.0), "{what}[{i}]: {g} vs {w}");
    }
}
