use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::adamw::{AdamW, AdamWConfig};
use super::mlp::{predict_from_probabilities, Mlp, MlpArchitecture};
use super::Real;
use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs without a strict improvement in validation accuracy before
    /// training stops.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            patience: 15,
            max_epochs: 500,
            batch_size: 256,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTrainConfig(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("max_epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters at the end of `best_epoch`.
    pub model: Mlp<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy<T: Real>(model: &Mlp<T>, data: &LabeledData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let chunk_rows = 1024;
    let mut correct = 0usize;
    for (chunk, labels) in data
        .features()
        .chunks(chunk_rows * data.dim())
        .zip(data.labels().chunks(chunk_rows))
    {
        let probs = model.forward(chunk)?;
        let pred = predict_from_probabilities(&probs, model.architecture().output);
        correct += pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_data<T: Real>(model: &Mlp<T>, data: &LabeledData, what: &'static str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty(what));
    }
    let arch = model.architecture();
    if data.dim() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            actual: data.dim(),
        });
    }
    if data.class_count() > arch.output.class_count() {
        return Err(Error::InvalidInput(format!(
            "{what} has {} classes but the output head has {}",
            data.class_count(),
            arch.output.class_count()
        )));
    }
    Ok(())
}

/// Trains with seeded shuffled minibatches and AdamW, evaluating validation
/// accuracy after every epoch.
///
/// Stops once `patience` epochs pass without a strict improvement, or at
/// `max_epochs`, and returns the parameters of the earliest best epoch.
/// `on_epoch` observes each epoch as it completes.
pub fn train_early_stop<T: Real>(
    model: Mlp<T>,
    train: &LabeledData,
    val: &LabeledData,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_data(&model, train, "training set")?;
    check_data(&model, val, "validation set")?;

    let dim = train.dim();
    let mut rng = seed::derived_rng(config.seed, &[0x7261_696e]);
    let mut optimizer = AdamW::new(&model, config.adamw());
    let mut current = model;
    let mut best = current.clone();
    let mut best_epoch = 0;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size * dim);
    let mut targets = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            targets.clear();
            for &i in chunk {
                batch.extend_from_slice(train.row(i));
                targets.push(train.labels()[i]);
            }
            let (loss, grads) = current.backward(&batch, &targets)?;
            loss_sum += loss * chunk.len() as f64;
            optimizer.step(&mut current, &grads);
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy: accuracy(&current, val)?,
        };
        on_epoch(&record);
        history.push(record);
        if record.val_accuracy > best_accuracy {
            best_accuracy = record.val_accuracy;
            best_epoch = epoch;
            best = current.clone();
        } else if epoch - best_epoch >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        best_accuracy,
    })
}

/// Trains a sigmoid linear classifier on real-vs-fake labels and returns it
/// with its best validation accuracy.
pub fn linear_probe(train: &LabeledData, val: &LabeledData, config: &TrainConfig) -> Result<(Mlp<f32>, f64)> {
    let arch = MlpArchitecture::linear_probe(train.dim())?;
    let model = Mlp::<f32>::new(arch, config.seed);
    let outcome = train_early_stop(model, train, val, config, |_| {})?;
    Ok((outcome.model, outcome.best_accuracy))
}
