//! Dense feed-forward networks trained from scratch: the linear probe, the
//! detection MLPs and the nine-class attribution MLPs.
//!
//! Models are generic over the parameter type so the same code trains in
//! `f32` and is gradient-checked in `f64`. Losses and optimizer moments are
//! always accumulated in `f64`.

mod adamw;
mod mlp;
mod train;

pub use adamw::{AdamW, AdamWConfig};
pub use mlp::{
    loss, Activation, Gradients, LayerParams, LossKind, Mlp, MlpArchitecture, OutputHead,
    LOG_CLAMP,
};
pub use train::{
    accuracy, linear_probe, train_early_stop, EpochRecord, TrainConfig, TrainOutcome,
};

use num_traits::Float;

/// Floating-point parameter type.
pub trait Real: Float + Default + core::fmt::Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
