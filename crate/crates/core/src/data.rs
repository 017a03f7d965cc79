//! In-memory image classification datasets.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Error, Result};
use crate::rng::{RngStream, STREAM_DATA, STREAM_SHUFFLE};
use crate::tensor::Tensor;

/// Images in NHWC layout with values in `[0, 1]` plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    image_shape: [usize; 3],
    pixels: Vec<f32>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(image_shape: [usize; 3], pixels: Vec<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let item: usize = image_shape.iter().product();
        if item == 0 {
            return Err(Error::Data(alloc::format!("image shape {image_shape:?} has a zero extent")));
        }
        if pixels.len() != item * labels.len() {
            return Err(Error::Data(alloc::format!(
                "{} labels need {} pixel values, got {}",
                labels.len(),
                item * labels.len(),
                pixels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Data(alloc::format!("label {bad} outside {class_count} classes")));
        }
        if let Some(bad) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(alloc::format!(
                "pixel {bad} has value {} outside [0, 1]",
                pixels[bad]
            )));
        }
        Ok(Self { image_shape, pixels, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[height, width, channels]`
    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    fn item_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    /// Images `start..end` as an `[n, h, w, c]` tensor.
    pub fn batch(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.len() {
            return Err(contract!("batch {start}..{end} outside dataset of {}", self.len()));
        }
        let item = self.item_len();
        let [h, w, c] = self.image_shape;
        Tensor::new([end - start, h, w, c], self.pixels[start * item..end * item].to_vec())
    }

    /// Images at `indices` as an `[n, h, w, c]` tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(contract!("cannot gather an empty batch"));
        }
        let item = self.item_len();
        let [h, w, c] = self.image_shape;
        let mut data = Vec::with_capacity(indices.len() * item);
        for &i in indices {
            if i >= self.len() {
                return Err(contract!("index {i} outside dataset of {}", self.len()));
            }
            data.extend_from_slice(&self.pixels[i * item..(i + 1) * item]);
        }
        Tensor::new([indices.len(), h, w, c], data)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let item = self.item_len();
        let mut pixels = Vec::with_capacity(indices.len() * item);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(contract!("index {i} outside dataset of {}", self.len()));
            }
            pixels.extend_from_slice(&self.pixels[i * item..(i + 1) * item]);
            labels.push(self.labels[i]);
        }
        Ok(Self { image_shape: self.image_shape, pixels, labels, class_count: self.class_count })
    }

    /// Number of examples per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Collapses RGB to one luma channel (ITU-R BT.601 weights).
    pub fn to_grayscale(&self) -> Result<Self> {
        let [h, w, c] = self.image_shape;
        if c != 3 {
            return Err(contract!("grayscale conversion needs 3 channels, have {c}"));
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Ok(Self { image_shape: [h, w, 1], pixels, labels: self.labels.clone(), class_count: self.class_count })
    }

    /// Iterates over mini-batches; shuffled when `seed` is given. The last
    /// batch may be shorter.
    pub fn batches(&self, batch_size: usize, seed: Option<u64>) -> Result<Batches<'_>> {
        if batch_size == 0 {
            return Err(contract!("batch size must be positive"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(seed) = seed {
            order.shuffle(&mut RngStream::new(seed, STREAM_SHUFFLE));
        }
        Ok(Batches { data: self, order, batch_size, next: 0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let idx = &self.order[self.next..end];
        self.next = end;
        let images = self.data.gather(idx).expect("indices come from the dataset");
        let labels = idx.iter().map(|&i| self.data.labels[i]).collect();
        Some(Batch { images, labels })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// Size of one split partition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(untagged))]
pub enum Portion {
    Count(usize),
    Fraction(f64),
}

/// Train/validation/test partitioning of a shuffled dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct SplitSpec {
    pub train: Portion,
    pub validation: Portion,
    pub test: Portion,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

impl Default for SplitSpec {
    /// 80/10/10.
    fn default() -> Self {
        Self { train: Portion::Fraction(0.8), validation: Portion::Fraction(0.1), test: Portion::Fraction(0.1), seed: 0 }
    }
}

impl SplitSpec {
    /// Resolves the three partition sizes for a dataset of `n` examples.
    ///
    /// When all three portions are fractions summing to one, the test
    /// partition takes the rounding remainder so the split is exhaustive.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        let portions = [self.train, self.validation, self.test];
        let mut fraction_sum = 0.0;
        let mut all_fractions = true;
        let mut counts = [0usize; 3];
        for (slot, p) in counts.iter_mut().zip(portions) {
            *slot = match p {
                Portion::Count(c) => {
                    all_fractions = false;
                    c
                }
                Portion::Fraction(f) => {
                    if !(0.0..=1.0).contains(&f) {
                        return Err(Error::Config { field: "split", message: alloc::format!("fraction {f} outside [0, 1]") });
                    }
                    fraction_sum += f;
                    libm::floor(n as f64 * f) as usize
                }
            };
        }
        if all_fractions && (fraction_sum - 1.0).abs() < 1e-9 {
            counts[2] = n - counts[0] - counts[1];
        }
        let total: usize = counts.iter().sum();
        if total > n {
            return Err(Error::Config {
                field: "split",
                message: alloc::format!("split needs {total} examples, dataset has {n}"),
            });
        }
        Ok(counts)
    }
}

/// Shuffles once with the split seed and cuts consecutive partitions.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = spec.counts(data.len())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut RngStream::new(spec.seed, STREAM_SHUFFLE | 1));
    Ok((
        data.subset(&order[..tr])?,
        data.subset(&order[tr..tr + va])?,
        data.subset(&order[tr + va..tr + va + te])?,
    ))
}

/// Parameters of the synthetic "bright cell" task.
///
/// The image is divided into a `g×g` grid with `g = ceil(sqrt(classes))`;
/// an example of class `k` has grid cell `k` lit at intensity 1 and the
/// rest dark, plus clamped Gaussian pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct SyntheticTask {
    pub classes: usize,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub noise: f64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self { classes: 2, count: 256, height: 8, width: 8, channels: 1, noise: 0.3 }
    }
}

impl SyntheticTask {
    pub fn grid(&self) -> usize {
        let mut g = 1;
        while g * g < self.classes {
            g += 1;
        }
        g
    }

    /// Whether pixel `(y, x)` lies in the cell that encodes `class`.
    pub fn in_cell(&self, class: usize, y: usize, x: usize) -> bool {
        let g = self.grid();
        let (ch, cw) = (self.height / g, self.width / g);
        let (row, col) = (class / g, class % g);
        (row * ch..(row + 1) * ch).contains(&y) && (col * cw..(col + 1) * cw).contains(&x)
    }
}

pub fn make_synthetic(task: &SyntheticTask, seed: u64) -> Result<Dataset> {
    if task.classes < 2 {
        return Err(Error::Config { field: "classes", message: "need at least two classes".into() });
    }
    let g = task.grid();
    if task.height < g || task.width < g || task.channels == 0 {
        return Err(Error::Config {
            field: "height",
            message: alloc::format!("{}x{} image cannot hold a {g}x{g} grid", task.height, task.width),
        });
    }
    if !(task.noise >= 0.0 && task.noise.is_finite()) {
        return Err(Error::Config { field: "noise", message: alloc::format!("noise {} must be >= 0", task.noise) });
    }
    let mut rng = RngStream::new(seed, STREAM_DATA);
    let mut labels: Vec<usize> = (0..task.count).map(|i| i % task.classes).collect();
    labels.shuffle(&mut rng);
    let noise = Normal::new(0.0, task.noise).expect("validated above");
    let item = task.height * task.width * task.channels;
    let mut pixels = Vec::with_capacity(task.count * item);
    for &label in &labels {
        for y in 0..task.height {
            for x in 0..task.width {
                let base = if task.in_cell(label, y, x) { 1.0 } else { 0.0 };
                for _ in 0..task.channels {
                    let v = if task.noise > 0.0 { base + noise.sample(&mut rng) } else { base };
                    pixels.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    Dataset::new([task.height, task.width, task.channels], pixels, labels, task.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        Dataset::new([1, 1, 1], (0..n).map(|i| i as f32 / n as f32).collect(), (0..n).map(|i| i % 3).collect(), 3)
            .unwrap()
    }

    #[test]
    fn invariants_are_checked() {
        assert!(Dataset::new([1, 1, 1], vec![0.5], vec![3], 3).is_err());
        assert!(Dataset::new([1, 1, 1], vec![1.5], vec![0], 3).is_err());
        assert!(Dataset::new([1, 1, 1], vec![0.5, 0.5], vec![0], 3).is_err());
    }

    #[test]
    fn batch_sizes() {
        let d = toy(100);
        let sizes: Vec<usize> = d.batches(32, Some(1)).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, [32, 32, 32, 4]);
        let a: Vec<Vec<usize>> = d.batches(32, Some(9)).unwrap().map(|b| b.labels).collect();
        let b: Vec<Vec<usize>> = d.batches(32, Some(9)).unwrap().map(|b| b.labels).collect();
        assert_eq!(a, b);
        let first = d.batches(100, None).unwrap().next().unwrap();
        assert_eq!(first.labels, d.labels());
    }

    #[test]
    fn fractional_split_is_disjoint_and_exhaustive() {
        let d = toy(100);
        let spec = SplitSpec {
            train: Portion::Fraction(0.8),
            validation: Portion::Fraction(0.1),
            test: Portion::Fraction(0.1),
            seed: 3,
        };
        let (tr, va, te) = split(&d, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        let mut seen: Vec<u32> = tr.pixels().iter().chain(va.pixels()).chain(te.pixels()).map(|v| v.to_bits()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 100);
        assert_eq!(split(&d, &spec).unwrap().0, tr);
    }

    #[test]
    fn count_split_rejects_oversize() {
        let d = toy(10);
        let spec = SplitSpec { train: Portion::Count(8), validation: Portion::Count(3), test: Portion::Count(0), seed: 0 };
        assert!(split(&d, &spec).is_err());
    }

    #[test]
    fn synthetic_is_balanced_and_seeded() {
        let task = SyntheticTask { classes: 3, count: 100, ..Default::default() };
        let a = make_synthetic(&task, 4).unwrap();
        assert_eq!(a, make_synthetic(&task, 4).unwrap());
        let h = a.class_histogram();
        assert!(h.iter().max().unwrap() - h.iter().min().unwrap() <= 1);
    }

    #[test]
    fn grayscale() {
        let d = Dataset::new([1, 1, 3], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0], vec![0, 1], 2).unwrap();
        let g = d.to_grayscale().unwrap();
        assert_eq!(g.image_shape(), [1, 1, 1]);
        assert!((g.pixels()[0] - 1.0).abs() < 1e-6);
        assert!((g.pixels()[1] - 0.299).abs() < 1e-6);
    }
}
