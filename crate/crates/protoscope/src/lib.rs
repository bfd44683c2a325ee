//! File formats, parallel evaluation and the `protoscope` command-line tool
//! built on [`protoscope_core`].
//!
//! - [`fpro`]: the binary feature-set format (`.fpro`).
//! - [`fmlp`]: the binary network checkpoint format (`.fmlp`).
//! - [`report`]: CSV, Markdown and JSON renderings of matrices, grids and
//!   confusion matrices.
//! - [`parallel`]: rayon-backed grid searches and batch prediction.
//! - [`world_config`]: the text format describing synthetic worlds.
//! - [`domains`]: loading per-generator subsets and building task data.
//! - [`manifest`]: run directories and their `manifest.json`.
//! - [`cli`]: argument parsing and the subcommands.

mod binio;
pub mod cli;
pub mod domains;
pub mod error;
pub mod fmlp;
pub mod fpro;
pub mod manifest;
pub mod parallel;
pub mod report;
pub mod world_config;

pub use error::{AppError, Result};
