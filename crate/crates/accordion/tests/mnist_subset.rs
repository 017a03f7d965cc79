//! Cross-check of the bundled 5000-image MNIST subset against values read
//! with an independent numpy IDX reader.

use std::path::Path;

use accordion::datasets::load_mnist_idx;

#[test]
fn bundled_subset_matches_reference_reader() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-5k");
    let data = load_mnist_idx(&dir.join("images-idx3-ubyte"), &dir.join("labels-idx1-ubyte")).unwrap();
    assert_eq!(data.len(), 5000);
    assert_eq!(data.image_shape(), [28, 28, 1]);
    assert_eq!(data.class_count(), 10);
    assert_eq!(data.class_histogram(), vec![500; 10]);

    let bytes = |v: &[f32]| -> Vec<u64> { v.iter().map(|&p| (p * 255.0).round() as u64).collect() };
    assert!(data.pixels().iter().all(|&p| ((p * 255.0).round() / 255.0 - p).abs() < 1e-7));
    assert_eq!(bytes(data.pixels()).iter().sum::<u64>(), 131_267_102);
    assert_eq!(bytes(&data.pixels()[1234 * 784..1235 * 784]).iter().sum::<u64>(), 45_575);
    assert_eq!(data.labels()[1234], 2);
    let row = 4321 * 784 + 14 * 28;
    assert_eq!(bytes(&data.pixels()[row + 10..row + 18]), [0, 0, 0, 173, 253, 254, 118, 0]);
}
