use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::EvalMatrix;
use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::feature_store::{sample_attribution_support, sample_support, FeatureSet};
use crate::knn::{self, KnnClassifier, ATTRIBUTION_SUPPORT_SIZES, DETECTION_SUPPORT_SIZES, GRID_KS};
use crate::metrics::DistanceMetric;
use crate::seed;

/// Which `(support size, k)` combinations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    /// `k <= |S|`.
    TotalSupport,
    /// `k <= |S| / classes`: every class could fill the neighbourhood alone.
    PerClass,
}

pub fn feasible(k: usize, support_size: usize, classes: usize, rule: Feasibility) -> bool {
    match rule {
        Feasibility::TotalSupport => k <= support_size,
        Feasibility::PerClass => k <= support_size / classes,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub metrics: Vec<DistanceMetric>,
    pub support_sizes: Vec<usize>,
    pub ks: Vec<usize>,
}

impl GridAxes {
    /// Four metrics x 17 support sizes x 24 neighbour counts.
    pub fn detection_default() -> Self {
        Self {
            metrics: DistanceMetric::ALL.to_vec(),
            support_sizes: DETECTION_SUPPORT_SIZES.to_vec(),
            ks: GRID_KS.to_vec(),
        }
    }

    /// Correlation distance over the nine-class support sizes.
    pub fn attribution_default() -> Self {
        Self {
            metrics: vec![DistanceMetric::Correlation],
            support_sizes: ATTRIBUTION_SUPPORT_SIZES.to_vec(),
            ks: GRID_KS.to_vec(),
        }
    }

    /// `(metric, support size)` pairs; each is one independent job covering
    /// every k.
    pub fn jobs(&self) -> Vec<(DistanceMetric, usize)> {
        self.metrics
            .iter()
            .flat_map(|&m| self.support_sizes.iter().map(move |&s| (m, s)))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.metrics.len() * self.support_sizes.len() * self.ks.len()
    }

    /// Rejects empty axes and zero k or support sizes.
    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() || self.support_sizes.is_empty() || self.ks.is_empty() {
            return Err(Error::Empty("grid axis"));
        }
        if self.ks.contains(&0) || self.support_sizes.contains(&0) {
            return Err(Error::InvalidKnnConfig("grid values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub metric: DistanceMetric,
    pub support_size: usize,
    pub k: usize,
    /// Percent accuracy; `None` for skipped cells, where k breaks the
    /// feasibility rule or the training data holds too few records per
    /// class for the support size.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    cells: Vec<GridCell>,
    best: Option<usize>,
}

impl GridResult {
    /// Selects the highest-accuracy cell exhaustively; ties go to the first
    /// cell in order.
    pub fn new(cells: Vec<GridCell>) -> Self {
        let mut best: Option<usize> = None;
        for (i, c) in cells.iter().enumerate() {
            if let Some(a) = c.accuracy {
                if best.is_none_or(|b| a > cells[b].accuracy.unwrap_or(f64::NEG_INFINITY)) {
                    best = Some(i);
                }
            }
        }
        Self { cells, best }
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn best(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    /// Orders job outputs (any completion order) into axis order: metric,
    /// then support size, then k.
    pub fn from_groups(axes: &GridAxes, mut groups: Vec<Vec<GridCell>>) -> Self {
        let rank = |c: &GridCell| {
            (
                axes.metrics.iter().position(|&m| m == c.metric),
                axes.support_sizes.iter().position(|&s| s == c.support_size),
                axes.ks.iter().position(|&k| k == c.k),
            )
        };
        let mut cells: Vec<GridCell> = groups.drain(..).flatten().collect();
        cells.sort_by_key(rank);
        Self::new(cells)
    }
}

/// One generator's training subset and validation set for detection.
#[derive(Debug, Clone)]
pub struct DetectionDomain {
    pub label: String,
    pub train: FeatureSet,
    /// Real = 0, fake = 1.
    pub validation: LabeledData,
}

/// Seed of the support drawn for `(support size, source)`; shared across
/// metrics so they are compared on identical supports.
pub fn support_seed(seed: u64, support_size: usize, source: usize) -> u64 {
    seed::derive(seed, &[support_size as u64, source as u64])
}

/// Correct-prediction counts for several k from one nearest-neighbour pass
/// per query.
fn count_correct(clf: &KnnClassifier, target: &LabeledData, ks: &[usize]) -> Result<Vec<usize>> {
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let mut correct = vec![0usize; ks.len()];
    for (row, &truth) in target.rows().zip(target.labels()) {
        let nearest = clf.nearest(row, k_max)?;
        for (slot, &k) in correct.iter_mut().zip(ks) {
            if knn::vote(&nearest[..k], clf.class_count()).0 == truth {
                *slot += 1;
            }
        }
    }
    Ok(correct)
}

/// Cross-generator matrices for every feasible k of one `(metric, size)`
/// job; infeasible k, and every k when a training subset cannot supply
/// `support_size / 2` records per class, yield `None`.
pub fn detection_grid_group_matrices(
    domains: &[DetectionDomain],
    metric: DistanceMetric,
    support_size: usize,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<(usize, Option<EvalMatrix>)>> {
    if domains.is_empty() {
        return Err(Error::Empty("generator domains"));
    }
    let half = support_size / 2;
    let affordable = domains.iter().all(|d| d.train.count_real() >= half && d.train.count_fake() >= half);
    let live: Vec<usize> = ks
        .iter()
        .copied()
        .filter(|&k| affordable && feasible(k, support_size, 2, Feasibility::TotalSupport))
        .collect();
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(domains.len()); live.len()];
    if !live.is_empty() {
        for (a, source) in domains.iter().enumerate() {
            let support = sample_support(&source.train, support_size, support_seed(seed, support_size, a))?;
            let clf = KnnClassifier::new(&support, metric);
            let mut per_k = vec![Vec::with_capacity(domains.len()); live.len()];
            for target in domains {
                if target.validation.is_empty() {
                    return Err(Error::Empty("validation set"));
                }
                let correct = count_correct(&clf, &target.validation, &live)?;
                for (row, c) in per_k.iter_mut().zip(correct) {
                    row.push(100.0 * c as f64 / target.validation.len() as f64);
                }
            }
            for (acc, row) in rows.iter_mut().zip(per_k) {
                acc.push(row);
            }
        }
    }
    let labels: Vec<String> = domains.iter().map(|d| d.label.clone()).collect();
    let mut live_rows = rows.into_iter();
    ks.iter()
        .map(|&k| {
            if live.contains(&k) {
                let r = live_rows.next().expect("one row set per live k");
                Ok((k, Some(EvalMatrix::from_rows(labels.clone(), r)?)))
            } else {
                Ok((k, None))
            }
        })
        .collect()
}

/// Grid cells of one `(metric, support size)` detection job; accuracy is the
/// cross-generator grand mean.
pub fn detection_grid_group(
    domains: &[DetectionDomain],
    metric: DistanceMetric,
    support_size: usize,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<GridCell>> {
    Ok(detection_grid_group_matrices(domains, metric, support_size, ks, seed)?
        .into_iter()
        .map(|(k, m)| GridCell {
            metric,
            support_size,
            k,
            accuracy: m.map(|m| m.grand_mean()),
        })
        .collect())
}

/// Cross-generator matrix of one k-NN configuration.
pub fn detection_matrix(
    domains: &[DetectionDomain],
    metric: DistanceMetric,
    support_size: usize,
    k: usize,
    seed: u64,
) -> Result<EvalMatrix> {
    detection_grid_group_matrices(domains, metric, support_size, &[k], seed)?
        .pop()
        .and_then(|(_, m)| m)
        .ok_or_else(|| Error::InvalidKnnConfig(alloc::format!("k = {k} with support size {support_size} is infeasible for this data")))
}

/// Exhaustive detection grid, evaluated sequentially.
pub fn grid_search_knn_detection(domains: &[DetectionDomain], axes: &GridAxes, seed: u64) -> Result<GridResult> {
    axes.validate()?;
    let groups = axes
        .jobs()
        .into_iter()
        .map(|(m, s)| detection_grid_group(domains, m, s, &axes.ks, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult::from_groups(axes, groups))
}

/// Grid cells of one `(metric, support size)` attribution job.
///
/// `classes[i]` holds the training records of class `i`; `validation` is
/// labelled with the same class indices. Every k is skipped when a class
/// holds fewer than `support_size / classes.len()` records.
pub fn attribution_grid_group(
    classes: &[FeatureSet],
    validation: &LabeledData,
    metric: DistanceMetric,
    support_size: usize,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<GridCell>> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let n = classes.len();
    let affordable = classes.iter().all(|c| c.len() >= support_size / n.max(1));
    let live: Vec<usize> = ks
        .iter()
        .copied()
        .filter(|&k| affordable && feasible(k, support_size, n, Feasibility::PerClass))
        .collect();
    let mut accuracy = vec![None; ks.len()];
    if !live.is_empty() {
        let support = sample_attribution_support(classes, support_size, support_seed(seed, support_size, 0))?;
        let clf = KnnClassifier::new(&support, metric);
        let correct = count_correct(&clf, validation, &live)?;
        for (k, c) in live.iter().zip(correct) {
            let slot = ks.iter().position(|x| x == k).expect("live k comes from ks");
            accuracy[slot] = Some(100.0 * c as f64 / validation.len() as f64);
        }
    }
    Ok(ks
        .iter()
        .zip(accuracy)
        .map(|(&k, accuracy)| GridCell {
            metric,
            support_size,
            k,
            accuracy,
        })
        .collect())
}

/// Exhaustive attribution grid, evaluated sequentially.
pub fn grid_search_knn_attribution(
    classes: &[FeatureSet],
    validation: &LabeledData,
    axes: &GridAxes,
    seed: u64,
) -> Result<GridResult> {
    axes.validate()?;
    let groups = axes
        .jobs()
        .into_iter()
        .map(|(m, s)| attribution_grid_group(classes, validation, m, s, &axes.ks, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult::from_groups(axes, groups))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_matches_attribution_table_dashes() {
        // (k, size) pairs shown as dashes and values in the nine-class table.
        let dashes = [(9, 18), (19, 18), (19, 90), (35, 180), (101, 900)];
        let values = [(1, 18), (9, 90), (19, 180), (35, 900), (101, 1800), (9, 9000)];
        for (k, s) in dashes {
            assert!(!feasible(k, s, 9, Feasibility::PerClass), "{k} {s}");
        }
        for (k, s) in values {
            assert!(feasible(k, s, 9, Feasibility::PerClass), "{k} {s}");
        }
        assert!(feasible(101, 2000, 2, Feasibility::TotalSupport));
        assert!(!feasible(5, 4, 2, Feasibility::TotalSupport));
    }

    #[test]
    fn best_cell_is_first_maximum() {
        let cell = |k, a| GridCell {
            metric: DistanceMetric::Cosine,
            support_size: 10,
            k,
            accuracy: a,
        };
        let r = GridResult::new(vec![cell(1, Some(80.0)), cell(3, None), cell(5, Some(90.0)), cell(7, Some(90.0))]);
        assert_eq!(r.best().unwrap().k, 5);
        assert!(GridResult::new(vec![cell(1, None)]).best().is_none());
    }

    #[test]
    fn default_axes_sizes() {
        assert_eq!(GridAxes::detection_default().cell_count(), 4 * 17 * 24);
        assert_eq!(GridAxes::attribution_default().jobs().len(), 17);
    }
}
