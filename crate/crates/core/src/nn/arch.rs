//! Built-in architectures.

use alloc::string::ToString;
use alloc::vec;

use super::{Activation, Conv2d, Dense, LayerSpec, NetworkSpec, Padding, Pool2d};

/// Names accepted by [`architecture`]. `synthetic-tiny` also accepts a class
/// count suffix, e.g. `synthetic-tiny-4`.
pub const ARCHITECTURES: &[&str] = &["mnist-custom", "lenet-cifar10", "synthetic-tiny"];

pub fn architecture(name: &str) -> Option<NetworkSpec> {
    match name {
        "mnist-custom" => Some(mnist_custom()),
        "lenet-cifar10" => Some(lenet_cifar10()),
        "synthetic-tiny" => Some(synthetic_tiny(2)),
        _ => {
            let k: usize = name.strip_prefix("synthetic-tiny-")?.parse().ok()?;
            (k >= 2).then(|| synthetic_tiny(k))
        }
    }
}

fn conv(filters: usize, k: usize, in_channels: usize) -> LayerSpec {
    LayerSpec::Conv2d(Conv2d {
        filters,
        kernel: [k, k],
        in_channels,
        padding: Padding::Same,
        activation: Activation::Relu,
    })
}

fn dense(in_features: usize, out_features: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense(Dense { in_features, out_features, activation })
}

/// Custom 28×28×1 classifier with filter counts 40, 40, 5, 1 and dense 9→40→10.
///
/// Kernels are 2×2 with "same" padding and every pool is 2×2/2, giving
/// 28→14→7→3 spatially. The second convolution takes all 40 channels of the
/// first, so its bank holds 6400 values (not 3200) and the third holds 800
/// (not 400); the total is 8140 trainable scalars rather than 4540. Gene
/// counts are unaffected: 6 layers, 40+40+5+1+40+10 = 136 filters/neurons.
pub fn mnist_custom() -> NetworkSpec {
    let pool = LayerSpec::MaxPool2d(Pool2d::square(2));
    NetworkSpec {
        name: "mnist-custom".to_string(),
        input: [28, 28, 1],
        class_count: 10,
        layers: vec![
            conv(40, 2, 1),
            pool,
            conv(40, 2, 40),
            pool,
            conv(5, 2, 40),
            pool,
            conv(1, 2, 5),
            LayerSpec::Flatten,
            dense(9, 40, Activation::Relu),
            dense(40, 10, Activation::Softmax),
        ],
    }
}

/// LeNet-style network on single-channel 32×32 input: 291870 scalars.
pub fn lenet_cifar10() -> NetworkSpec {
    let pool = LayerSpec::AvgPool2d(Pool2d::square(2));
    NetworkSpec {
        name: "lenet-cifar10".to_string(),
        input: [32, 32, 1],
        class_count: 10,
        layers: vec![
            conv(6, 5, 1),
            pool,
            conv(16, 5, 6),
            pool,
            conv(120, 5, 16),
            pool,
            LayerSpec::Flatten,
            dense(1920, 120, Activation::Relu),
            dense(120, 84, Activation::Relu),
            dense(84, 10, Activation::Softmax),
        ],
    }
}

/// Small 8×8×1 network for the synthetic task.
pub fn synthetic_tiny(classes: usize) -> NetworkSpec {
    let pool = LayerSpec::MaxPool2d(Pool2d::square(2));
    let name = if classes == 2 {
        "synthetic-tiny".to_string()
    } else {
        alloc::format!("synthetic-tiny-{classes}")
    };
    NetworkSpec {
        name,
        input: [8, 8, 1],
        class_count: classes,
        layers: vec![
            conv(4, 2, 1),
            pool,
            conv(2, 2, 4),
            pool,
            LayerSpec::Flatten,
            dense(8, 8, Activation::Relu),
            dense(8, classes, Activation::Softmax),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;

    #[test]
    fn lenet_matches_published_shapes_and_count() {
        let spec = lenet_cifar10();
        let shapes = spec.output_shapes().unwrap();
        let want = [
            Shape::Spatial(32, 32, 6),
            Shape::Spatial(16, 16, 6),
            Shape::Spatial(16, 16, 16),
            Shape::Spatial(8, 8, 16),
            Shape::Spatial(8, 8, 120),
            Shape::Spatial(4, 4, 120),
            Shape::Flat(1920),
            Shape::Flat(120),
            Shape::Flat(84),
            Shape::Flat(10),
        ];
        assert_eq!(shapes, want);
        let per_layer: alloc::vec::Vec<usize> =
            spec.layers.iter().map(LayerSpec::param_count).filter(|&c| c > 0).collect();
        assert_eq!(per_layer, [150, 2400, 48000, 230400, 10080, 840]);
        assert_eq!(spec.param_count(), 291_870);
    }

    #[test]
    fn mnist_reconstruction_shapes() {
        let spec = mnist_custom();
        let shapes = spec.output_shapes().unwrap();
        assert_eq!(shapes[0], Shape::Spatial(28, 28, 40));
        assert_eq!(shapes[1], Shape::Spatial(14, 14, 40));
        assert_eq!(shapes[5], Shape::Spatial(3, 3, 5));
        assert_eq!(shapes[7], Shape::Flat(9));
        assert_eq!(spec.layers[0].param_count(), 160);
        assert_eq!(spec.layers[6].param_count(), 20);
        assert_eq!(spec.layers[8].param_count(), 360);
        assert_eq!(spec.layers[9].param_count(), 400);
        assert_eq!(spec.param_count(), 8140);
    }

    #[test]
    fn registry_lookup() {
        for name in ARCHITECTURES {
            let spec = architecture(name).unwrap();
            assert_eq!(spec.name, *name);
            spec.validate().unwrap();
        }
        assert_eq!(architecture("synthetic-tiny-4").unwrap().class_count, 4);
        assert!(architecture("synthetic-tiny-1").is_none());
        assert!(architecture("resnet").is_none());
    }
}
