//! Dense row-major feature matrices with class labels, the input format of
//! the neural and evaluation modules.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feature_store::{FeatureSet, PrototypeRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    dim: usize,
    class_count: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(dim: usize, class_count: usize, features: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        Ok(Self {
            dim,
            class_count,
            features,
            labels,
        })
    }

    /// Flattens a feature set using `label` to assign each record a class.
    pub fn from_feature_set(
        set: &FeatureSet,
        class_count: usize,
        label: impl Fn(&PrototypeRecord) -> usize,
    ) -> Result<Self> {
        let mut features = Vec::with_capacity(set.len() * set.dim());
        let mut labels = Vec::with_capacity(set.len());
        for r in set.records() {
            features.extend_from_slice(&r.features);
            labels.push(label(r));
        }
        Self::new(set.dim(), class_count, features, labels)
    }

    /// Real = 0, fake = 1.
    pub fn detection(set: &FeatureSet) -> Result<Self> {
        Self::from_feature_set(set, 2, |r| r.authenticity().label())
    }

    /// Real = 0, generator `g` = `1 + g.index()`.
    pub fn attribution(set: &FeatureSet) -> Result<Self> {
        Self::from_feature_set(set, crate::feature_store::ATTRIBUTION_CLASSES, |r| {
            crate::feature_store::attribution_label(r.generator)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledData {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledData {
            dim: self.dim,
            class_count: self.class_count,
            features,
            labels,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::Generator;
    use alloc::vec;

    #[test]
    fn labels_from_records() {
        let set = FeatureSet::new(
            2,
            "t",
            vec![
                PrototypeRecord::new("a", vec![1.0, 2.0], None),
                PrototypeRecord::new("b", vec![3.0, 4.0], Some(Generator::Wukong)),
            ],
        )
        .unwrap();
        let det = LabeledData::detection(&set).unwrap();
        assert_eq!(det.labels(), &[0, 1]);
        assert_eq!(det.row(1), &[3.0, 4.0]);
        let att = LabeledData::attribution(&set).unwrap();
        assert_eq!(att.labels(), &[0, 1 + Generator::Wukong.index()]);
        assert!(LabeledData::new(2, 2, vec![0.0; 3], vec![0]).is_err());
        assert!(LabeledData::new(1, 2, vec![0.0], vec![2]).is_err());
    }
}
