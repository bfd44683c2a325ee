use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::LabeledData;
use crate::error::{Error, Result};

/// Source x target accuracy grid, in percent.
///
/// Row `i` holds a classifier trained on (or a support set drawn from)
/// `row_labels[i]`, evaluated on each target in `col_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    cells: Vec<f64>,
}

impl EvalMatrix {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, cells: Vec<f64>) -> Result<Self> {
        if row_labels.is_empty() || col_labels.is_empty() {
            return Err(Error::Empty("matrix labels"));
        }
        if cells.len() != row_labels.len() * col_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: row_labels.len() * col_labels.len(),
                actual: cells.len(),
            });
        }
        if let Some(c) = cells.iter().find(|c| !(0.0..=100.0).contains(*c)) {
            return Err(Error::InvalidInput(format!("accuracy {c} outside [0, 100]")));
        }
        Ok(Self {
            row_labels,
            col_labels,
            cells,
        })
    }

    /// Builds a square matrix from per-source rows.
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cells = rows.concat();
        Self::new(labels.clone(), labels, cells)
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols() + col]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn row_means(&self) -> Vec<f64> {
        self.cells
            .chunks_exact(self.cols())
            .map(|r| r.iter().sum::<f64>() / self.cols() as f64)
            .collect()
    }

    pub fn col_means(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|c| (0..self.rows()).map(|r| self.get(r, c)).sum::<f64>() / self.rows() as f64)
            .collect()
    }

    /// Mean over all cells.
    pub fn grand_mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / self.cells.len() as f64
    }
}

/// Accuracy (percent) of one classifier on each target set.
///
/// `classify` maps a batch of rows to predicted labels.
pub fn cross_generator_row(
    mut classify: impl FnMut(&LabeledData) -> Result<Vec<usize>>,
    targets: &[&LabeledData],
) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|t| {
            if t.is_empty() {
                return Err(Error::Empty("validation set"));
            }
            let pred = classify(t)?;
            if pred.len() != t.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    actual: pred.len(),
                });
            }
            let correct = pred.iter().zip(t.labels()).filter(|(p, l)| p == l).count();
            Ok(100.0 * correct as f64 / t.len() as f64)
        })
        .collect()
}
