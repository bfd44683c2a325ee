//! Cross-generator evaluation, k-NN hyperparameter grids and confusion
//! matrices.

mod confusion;
mod grid;
mod matrix;

pub use confusion::ConfusionMatrix;
pub use grid::{
    attribution_grid_group, detection_grid_group, detection_grid_group_matrices, detection_matrix, feasible, grid_search_knn_attribution,
    grid_search_knn_detection, support_seed, DetectionDomain, Feasibility, GridAxes, GridCell, GridResult,
};
pub use matrix::{cross_generator_row, EvalMatrix};
