//! Exact brute-force k-nearest-neighbour classification.
//!
//! Every query is compared against every support entry. Neighbours are
//! ordered by `(distance, support index)`, so ties at the k-th position are
//! resolved by support order and results never depend on scheduling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::metrics::{self, DistanceMetric, Prepared};

/// Support sizes of the detection grid.
pub const DETECTION_SUPPORT_SIZES: [usize; 17] = [
    4, 10, 20, 30, 40, 60, 80, 100, 200, 250, 300, 350, 400, 600, 800, 1000, 2000,
];

/// Support sizes of the nine-class attribution grid.
pub const ATTRIBUTION_SUPPORT_SIZES: [usize; 17] = [
    18, 45, 90, 135, 180, 270, 360, 450, 900, 1125, 1350, 1575, 1800, 2700, 3600, 4500, 9000,
];

/// Neighbour counts searched in both grids.
pub const GRID_KS: [usize; 24] = [
    1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 33, 35, 37, 39, 41, 43, 45, 101,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEntry {
    pub features: Vec<f32>,
    pub label: usize,
}

impl SupportEntry {
    pub fn new(features: Vec<f32>, label: usize) -> Self {
        Self { features, label }
    }
}

/// A balanced labelled reference collection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    dim: usize,
    class_count: usize,
    entries: Vec<SupportEntry>,
}

impl SupportSet {
    /// Validates dimensions, labels and balance.
    pub fn new(dim: usize, class_count: usize, entries: Vec<SupportEntry>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if entries.is_empty() {
            return Err(Error::Empty("support set"));
        }
        let mut counts = vec![0usize; class_count];
        for e in &entries {
            if e.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.features.len(),
                });
            }
            *counts.get_mut(e.label).ok_or(Error::LabelOutOfRange {
                label: e.label,
                classes: class_count,
            })? += 1;
        }
        let expected = entries.len() / class_count;
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c != expected) {
            return Err(Error::UnbalancedSupport {
                class,
                count,
                expected,
            });
        }
        Ok(Self {
            dim,
            class_count,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn entries(&self) -> &[SupportEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn per_class(&self) -> usize {
        self.entries.len() / self.class_count
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: DistanceMetric,
}

impl KnnConfig {
    pub fn new(k: usize, metric: DistanceMetric) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidKnnConfig("k must be positive".into()));
        }
        Ok(Self { k, metric })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
    pub label: usize,
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Neighbour count per class; sums to k.
    pub votes: Vec<usize>,
    /// Number of support distances computed for this query.
    pub distance_evaluations: usize,
}

/// Resolves a vote among tied classes: the smallest cumulative neighbour
/// distance wins, then the smallest class index.
pub fn tie_break(votes: &[usize], cumulative_distances: &[f64]) -> usize {
    let max = votes.iter().copied().max().unwrap_or(0);
    let mut best: Option<usize> = None;
    for (class, &v) in votes.iter().enumerate() {
        if v != max {
            continue;
        }
        best = match best {
            Some(b) if cumulative_distances[class] >= cumulative_distances[b] => Some(b),
            _ => Some(class),
        };
    }
    best.unwrap_or(0)
}

/// Majority vote over a neighbour list already in `(distance, index)` order.
pub fn vote(neighbors: &[Neighbor], class_count: usize) -> (usize, Vec<usize>) {
    let mut votes = vec![0usize; class_count];
    let mut sums = vec![0.0f64; class_count];
    for n in neighbors {
        votes[n.label] += 1;
        sums[n.label] += n.distance;
    }
    let max = votes.iter().copied().max().unwrap_or(0);
    let leaders = votes.iter().filter(|&&v| v == max).count();
    let label = if leaders == 1 {
        votes.iter().position(|&v| v == max).unwrap_or(0)
    } else {
        tie_break(&votes, &sums)
    };
    (label, votes)
}

/// A support set with every entry prepared for one metric.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    metric: DistanceMetric,
    dim: usize,
    class_count: usize,
    prepared: Vec<Prepared>,
    labels: Vec<usize>,
}

impl KnnClassifier {
    pub fn new(support: &SupportSet, metric: DistanceMetric) -> Self {
        Self {
            metric,
            dim: support.dim,
            class_count: support.class_count,
            prepared: support
                .entries
                .iter()
                .map(|e| metrics::prepare(&e.features, metric))
                .collect(),
            labels: support.entries.iter().map(|e| e.label).collect(),
        }
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn support_len(&self) -> usize {
        self.labels.len()
    }

    fn neighbors<T: Copy + Into<f64>>(&self, query: &[T]) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let q = metrics::prepare(query, self.metric);
        Ok(self
            .prepared
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(index, (p, &label))| Neighbor {
                distance: metrics::prepared_distance(&q, p, self.metric),
                index,
                label,
            })
            .collect())
    }

    /// All support entries ordered by distance to `query`.
    pub fn ranked_neighbors<T: Copy + Into<f64>>(&self, query: &[T]) -> Result<Vec<Neighbor>> {
        let mut all = self.neighbors(query)?;
        all.sort_unstable_by(neighbor_order);
        Ok(all)
    }

    /// The `k` nearest support entries in `(distance, index)` order.
    pub fn nearest<T: Copy + Into<f64>>(&self, query: &[T], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.labels.len() {
            return Err(Error::InvalidKnnConfig(format!(
                "k = {k} outside 1..={}",
                self.labels.len()
            )));
        }
        let mut all = self.neighbors(query)?;
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, neighbor_order);
            all.truncate(k);
        }
        all.sort_unstable_by(neighbor_order);
        Ok(all)
    }

    pub fn predict<T: Copy + Into<f64>>(&self, query: &[T], k: usize) -> Result<Prediction> {
        let nearest = self.nearest(query, k)?;
        let (label, votes) = vote(&nearest, self.class_count);
        Ok(Prediction {
            label,
            votes,
            distance_evaluations: self.labels.len(),
        })
    }

    pub fn predict_batch<T: Copy + Into<f64>>(
        &self,
        queries: &[&[T]],
        k: usize,
    ) -> Result<Vec<Prediction>> {
        queries.iter().map(|q| self.predict(q, k)).collect()
    }
}

/// Predicts with a freshly prepared classifier.
pub fn knn_predict<T: Copy + Into<f64>>(
    query: &[T],
    support: &SupportSet,
    config: KnnConfig,
) -> Result<Prediction> {
    KnnClassifier::new(support, config.metric).predict(query, config.k)
}
