use crate::error::{contract, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to `[CE_EPSILON, 1]` before the logarithm.
pub const CE_EPSILON: f64 = 1e-7;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn rows<'a, T: Scalar>(probs: &'a Tensor<T>, labels: &[usize]) -> Result<core::slice::Chunks<'a, T>> {
    let (n, c) = match *probs.shape() {
        [n, c] => (n, c),
        ref s => return Err(contract!("probabilities must be [batch, classes], got {s:?}")),
    };
    if labels.len() != n {
        return Err(contract!("{} labels for {n} predictions", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(contract!("label {bad} outside {c} classes"));
    }
    Ok(probs.data().chunks(c))
}

/// Mean of `-ln p[true class]` over the batch.
pub fn categorical_crossentropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    let total: f64 = rows(probs, labels)?
        .zip(labels)
        .map(|(row, &l)| -libm::log(row[l].to_f64().clamp(CE_EPSILON, 1.0)))
        .sum();
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

pub(crate) fn correct_count<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    Ok(rows(probs, labels)?.zip(labels).filter(|(row, &l)| argmax(row) == l).count())
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    let correct = correct_count(probs, labels)?;
    Ok(if n == 0 { 0.0 } else { correct as f64 / n as f64 })
}
