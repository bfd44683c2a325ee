use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Counts of (actual, predicted) class pairs; rows are actual classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            counts: vec![0; class_count * class_count],
        }
    }

    pub fn from_counts(class_count: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != class_count * class_count {
            return Err(Error::DimensionMismatch {
                expected: class_count * class_count,
                actual: counts.len(),
            });
        }
        Ok(Self { class_count, counts })
    }

    pub fn from_predictions(class_count: usize, actual: &[usize], predicted: &[usize]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: actual.len(),
                actual: predicted.len(),
            });
        }
        let mut m = Self::new(class_count);
        for (&a, &p) in actual.iter().zip(predicted) {
            m.record(a, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        for label in [actual, predicted] {
            if label >= self.class_count {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.class_count,
                });
            }
        }
        self.counts[actual * self.class_count + predicted] += 1;
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.class_count + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count).map(|c| self.get(c, c)).sum()
    }

    /// Samples per actual class.
    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.chunks_exact(self.class_count).map(|r| r.iter().sum()).collect()
    }

    /// Per-class recall; `None` for classes without samples.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.row_totals()
            .iter()
            .enumerate()
            .map(|(c, &t)| (t > 0).then(|| self.get(c, c) as f64 / t as f64))
            .collect()
    }

    /// Trace over total, in `[0, 1]`.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }
}
