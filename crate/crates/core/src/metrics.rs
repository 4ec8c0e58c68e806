//! Classification metrics.

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("prediction and truth shapes differ ({0} vs {1})")]
    ShapeMismatch(usize, usize),
    #[error("entry {0} is not 0/1")]
    NonBinary(usize),
    #[error("no rows to evaluate")]
    Empty,
}

/// Fraction of `rows` whose argmax logit equals the label. Ties go to the
/// smaller class id.
pub fn accuracy<T: Real>(logits: &Tensor<T>, labels: &[u32], rows: &[u32]) -> Result<f64, MetricError> {
    if rows.is_empty() {
        return Err(MetricError::Empty);
    }
    if labels.len() != logits.rows() {
        return Err(MetricError::ShapeMismatch(labels.len(), logits.rows()));
    }
    let correct = rows
        .iter()
        .filter(|&&i| argmax(logits.row(i as usize)) == labels[i as usize] as usize)
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Global true/false positive and false negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl F1Counts {
    pub fn add(&mut self, pred: &[u8], truth: &[u8]) -> Result<(), MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::ShapeMismatch(pred.len(), truth.len()));
        }
        for (k, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            if p > 1 || t > 1 {
                return Err(MetricError::NonBinary(k));
            }
            match (p, t) {
                (1, 1) => self.tp += 1,
                (1, 0) => self.fp += 1,
                (0, 1) => self.fn_ += 1,
                _ => {}
            }
        }
        Ok(())
    }

    /// `2 TP / (2 TP + FP + FN)`, 1.0 when every count is zero.
    pub fn micro_f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

pub fn micro_f1(pred: &[u8], truth: &[u8]) -> Result<f64, MetricError> {
    let mut c = F1Counts::default();
    c.add(pred, truth)?;
    Ok(c.micro_f1())
}

/// Thresholds `sigmoid(logit) >= 0.5`, i.e. `logit >= 0`.
pub fn threshold_logits<T: Real>(logits: &Tensor<T>) -> alloc::vec::Vec<u8> {
    logits.data().iter().map(|&v| u8::from(v >= T::zero())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn accuracy_cases() {
        let labels = [0u32, 2, 1];
        let onehot = Tensor::<f64>::from_fn(3, 3, |i, j| if labels[i] as usize == j { 1.0 } else { 0.0 });
        assert_eq!(accuracy(&onehot, &labels, &[0, 1, 2]).unwrap(), 1.0);
        let wrong = Tensor::<f64>::from_fn(3, 3, |i, j| if (labels[i] as usize + 1) % 3 == j { 1.0 } else { 0.0 });
        assert_eq!(accuracy(&wrong, &labels, &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&wrong, &labels, &[]), Err(MetricError::Empty));
    }

    #[test]
    fn micro_f1_cases() {
        let t = vec![1u8, 0, 1, 1];
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        let ones = vec![1u8; 4];
        assert_eq!(micro_f1(&[0, 0, 0, 0], &ones).unwrap(), 0.0);
        // TP=2, FP=1, FN=1
        let f = micro_f1(&[1, 1, 1, 0], &[1, 1, 0, 1]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        // TP=3, FP=1, FN=2
        let f = micro_f1(&[1, 1, 1, 1, 0, 0], &[1, 1, 1, 0, 1, 1]).unwrap();
        assert!((f - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(micro_f1(&[0, 0], &[0, 0]).unwrap(), 1.0);
        assert_eq!(micro_f1(&[2], &[1]), Err(MetricError::NonBinary(0)));
    }
}
