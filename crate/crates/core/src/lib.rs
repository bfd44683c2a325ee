//! Core algorithms for detecting AI-generated images and attributing them to
//! their source generator from compact diffusion U-Net feature prototypes.
//!
//! The crate is `no_std` and only needs an allocator. File formats, parallel
//! execution and the command-line tool live in the `protoscope` crate.
//!
//! Modules:
//! - [`feature_store`]: prototype records, feature sets, stratified splits and
//!   balanced support sampling.
//! - [`metrics`]: Euclidean, Manhattan, cosine and correlation distances.
//! - [`knn`]: exact brute-force k-nearest-neighbour classification.
//! - [`neural`]: dense networks, AdamW and early-stopped training.
//! - [`explain`]: expected-gradients attributions and top-k feature overlap.
//! - [`evaluation`]: cross-generator matrices, grid searches and confusion
//!   matrices.
//! - [`synthetic`]: seeded Gaussian "fingerprint" worlds with a Bayes oracle.

#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod feature_store;
pub mod knn;
pub mod metrics;
pub mod neural;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
