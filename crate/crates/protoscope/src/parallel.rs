//! Rayon-backed versions of the grid searches and batch prediction.
//!
//! Every job derives its randomness from its own coordinates, so results are
//! identical for any worker count.

use protoscope_core::data::LabeledData;
use protoscope_core::evaluation::{
    attribution_grid_group, detection_grid_group, DetectionDomain, GridAxes, GridCell, GridResult,
};
use protoscope_core::feature_store::FeatureSet;
use protoscope_core::knn::KnnClassifier;
use protoscope_core::metrics::DistanceMetric;
use rayon::prelude::*;

use crate::error::{AppError, Result};

/// Builds a pool with `jobs` workers; 0 means one per available core.
pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start {jobs} workers: {e}")))
}

fn run_jobs(
    axes: &GridAxes,
    job: impl Fn(DistanceMetric, usize) -> protoscope_core::Result<Vec<GridCell>> + Sync,
    progress: &(dyn Fn(&[GridCell]) + Sync),
) -> Result<GridResult> {
    axes.validate()?;
    let groups = axes
        .jobs()
        .into_par_iter()
        .map(|(m, s)| {
            let cells = job(m, s)?;
            progress(&cells);
            Ok(cells)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult::from_groups(axes, groups))
}

/// Detection grid with one parallel job per `(metric, support size)`.
pub fn grid_search_knn_detection(
    domains: &[DetectionDomain],
    axes: &GridAxes,
    seed: u64,
    progress: &(dyn Fn(&[GridCell]) + Sync),
) -> Result<GridResult> {
    run_jobs(axes, |m, s| detection_grid_group(domains, m, s, &axes.ks, seed), progress)
}

/// Attribution grid with one parallel job per `(metric, support size)`.
pub fn grid_search_knn_attribution(
    classes: &[FeatureSet],
    validation: &LabeledData,
    axes: &GridAxes,
    seed: u64,
    progress: &(dyn Fn(&[GridCell]) + Sync),
) -> Result<GridResult> {
    run_jobs(
        axes,
        |m, s| attribution_grid_group(classes, validation, m, s, &axes.ks, seed),
        progress,
    )
}

/// Labels for every row of `data`, queries spread across workers.
pub fn knn_predict_rows(clf: &KnnClassifier, data: &LabeledData, k: usize) -> Result<Vec<usize>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| Ok(clf.predict(data.row(i), k)?.label))
        .collect()
}
