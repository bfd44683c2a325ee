use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::Real;
use crate::error::{Error, Result};
use crate::seed;

/// Probabilities below this are clamped before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

/// Output layer of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    /// One logit squashed by a sigmoid; the probability of class 1.
    Sigmoid,
    /// `n` logits normalized by a softmax.
    Softmax(usize),
}

impl OutputHead {
    /// Number of output neurons.
    pub fn width(self) -> usize {
        match self {
            OutputHead::Sigmoid => 1,
            OutputHead::Softmax(n) => n,
        }
    }

    /// Number of classes the head discriminates.
    pub fn class_count(self) -> usize {
        match self {
            OutputHead::Sigmoid => 2,
            OutputHead::Softmax(n) => n,
        }
    }

    /// Loss used to train this head.
    pub fn loss_kind(self) -> LossKind {
        match self {
            OutputHead::Sigmoid | OutputHead::Softmax(2) => LossKind::BinaryCrossEntropy,
            OutputHead::Softmax(_) => LossKind::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    BinaryCrossEntropy,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output: OutputHead,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: &[usize], output: OutputHead) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArchitecture("input dimension must be positive".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidArchitecture("hidden widths must be positive".into()));
        }
        if let OutputHead::Softmax(n) = output {
            if n < 2 {
                return Err(Error::InvalidArchitecture(format!("softmax head needs >= 2 classes, got {n}")));
            }
        }
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            output,
            activation: Activation::Relu,
        })
    }

    /// A single linear layer with a sigmoid output.
    pub fn linear_probe(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, &[], OutputHead::Sigmoid)
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output.width());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Short name such as `mlp-640-320`, `mlp-320` or `linear`.
    pub fn name(&self) -> alloc::string::String {
        if self.hidden.is_empty() {
            return "linear".into();
        }
        let mut s = alloc::string::String::from("mlp");
        for h in &self.hidden {
            s.push_str(&format!("-{h}"));
        }
        s
    }
}

/// Weights (row-major, `outputs x inputs`) and biases of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn row(&self, o: usize) -> &[T] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Per-layer gradients, shaped like the model's parameters.
pub type Gradients<T> = Vec<LayerParams<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    architecture: MlpArchitecture,
    layers: Vec<LayerParams<T>>,
    seed: u64,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let j = c * 8;
        for l in 0..8 {
            acc[l] = acc[l] + a[j + l] * b[j + l];
        }
    }
    let mut tail = T::zero();
    for j in chunks * 8..a.len() {
        tail = tail + a[j] * b[j];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Forward-pass intermediates: the input followed by every layer's output
/// (post-activation for hidden layers, logits for the last).
struct Trace<T> {
    rows: usize,
    activations: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// Uniform initialization in `±1/sqrt(fan_in)` from a seeded stream.
    pub fn new(architecture: MlpArchitecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let layers = architecture
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let mut draw = || T::from_f64(rng.random_range(-bound..bound));
                let weights = (0..fan_in * fan_out).map(|_| draw()).collect();
                let bias = (0..fan_out).map(|_| draw()).collect();
                LayerParams {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights,
                    bias,
                }
            })
            .collect();
        Self {
            architecture,
            layers,
            seed,
        }
    }

    pub fn zeros(architecture: MlpArchitecture) -> Self {
        let layers = architecture
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| LayerParams::zeros(i, o))
            .collect();
        Self {
            architecture,
            layers,
            seed: 0,
        }
    }

    /// Assembles a model from explicit parameters, checking shapes and
    /// finiteness.
    pub fn from_layers(architecture: MlpArchitecture, layers: Vec<LayerParams<T>>, seed: u64) -> Result<Self> {
        let shapes = architecture.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::InvalidArchitecture(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (l, ((i, o), p)) in shapes.iter().zip(&layers).enumerate() {
            if p.inputs != *i || p.outputs != *o || p.weights.len() != i * o || p.bias.len() != *o {
                return Err(Error::InvalidArchitecture(format!("layer {l} has the wrong shape")));
            }
            if p.weights.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArchitecture(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Self {
            architecture,
            layers,
            seed,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            architecture: self.architecture.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|w| U::from_f64(w.as_f64())).collect(),
                    bias: l.bias.iter().map(|w| U::from_f64(w.as_f64())).collect(),
                })
                .collect(),
            seed: self.seed,
        }
    }

    fn check_batch<X>(&self, batch: &[X]) -> Result<usize> {
        let d = self.architecture.input_dim;
        if !batch.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: batch.len() % d,
            });
        }
        Ok(batch.len() / d)
    }

    fn trace<X: Copy + Into<f64>>(&self, batch: &[X]) -> Result<Trace<T>> {
        let rows = self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.iter().map(|&x| T::from_f64(x.into())).collect::<Vec<T>>());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &activations[l];
            let mut out = vec![T::zero(); rows * layer.outputs];
            for o in 0..layer.outputs {
                let w = layer.row(o);
                let b = layer.bias[o];
                for n in 0..rows {
                    let x = &input[n * layer.inputs..(n + 1) * layer.inputs];
                    let z = dot(w, x) + b;
                    out[n * layer.outputs + o] = if l == last || z > T::zero() { z } else { T::zero() };
                }
            }
            activations.push(out);
        }
        Ok(Trace { rows, activations })
    }

    /// Pre-activation outputs, `N x width`.
    pub fn logits<X: Copy + Into<f64>>(&self, batch: &[X]) -> Result<Vec<T>> {
        let mut t = self.trace(batch)?;
        Ok(t.activations.pop().unwrap_or_default())
    }

    fn probabilities_from_logits(&self, logits: &[T]) -> Vec<f64> {
        match self.architecture.output {
            OutputHead::Sigmoid => logits.iter().map(|z| sigmoid(z.as_f64())).collect(),
            OutputHead::Softmax(n) => {
                let mut out = Vec::with_capacity(logits.len());
                for row in logits.chunks_exact(n) {
                    let max = row.iter().map(|z| z.as_f64()).fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|z| libm::exp(z.as_f64() - max)).collect();
                    let sum: f64 = exps.iter().sum();
                    out.extend(exps.into_iter().map(|e| e / sum));
                }
                out
            }
        }
    }

    /// Output probabilities, `N x width` row-major: per-class rows for
    /// softmax heads, `P(class 1)` for the sigmoid head.
    pub fn forward<X: Copy + Into<f64>>(&self, batch: &[X]) -> Result<Vec<f64>> {
        let logits = self.logits(batch)?;
        Ok(self.probabilities_from_logits(&logits))
    }

    /// Predicted class per row: argmax (lowest index on ties) or
    /// `P(class 1) > 0.5` for the sigmoid head.
    pub fn predict<X: Copy + Into<f64>>(&self, batch: &[X]) -> Result<Vec<usize>> {
        let probs = self.forward(batch)?;
        Ok(predict_from_probabilities(&probs, self.architecture.output))
    }

    /// Mean loss of the batch and exact gradients of that loss.
    pub fn backward<X: Copy + Into<f64>>(&self, batch: &[X], targets: &[usize]) -> Result<(f64, Gradients<T>)> {
        let trace = self.trace(batch)?;
        let rows = trace.rows;
        if targets.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: targets.len(),
            });
        }
        let head = self.architecture.output;
        if let Some(&label) = targets.iter().find(|&&t| t >= head.class_count()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: head.class_count(),
            });
        }
        let logits = trace.activations.last().expect("trace has output");
        let probs = self.probabilities_from_logits(logits);
        let mean_loss = loss(&probs, head.width(), targets, head.loss_kind())?;

        // d(mean loss)/d(logits) = (p - onehot) / N for both heads.
        let width = head.width();
        let inv_n = 1.0 / rows as f64;
        let mut delta: Vec<T> = vec![T::zero(); rows * width];
        for n in 0..rows {
            match head {
                OutputHead::Sigmoid => {
                    let y = targets[n] as f64;
                    delta[n] = T::from_f64((probs[n] - y) * inv_n);
                }
                OutputHead::Softmax(_) => {
                    for c in 0..width {
                        let y = if targets[n] == c { 1.0 } else { 0.0 };
                        delta[n * width + c] = T::from_f64((probs[n * width + c] - y) * inv_n);
                    }
                }
            }
        }
        let grads = self.backpropagate(&trace, delta, false).0;
        Ok((mean_loss, grads))
    }

    /// Backpropagates output deltas. Returns parameter gradients and, when
    /// requested, the gradient with respect to the input rows.
    fn backpropagate(&self, trace: &Trace<T>, mut delta: Vec<T>, want_input: bool) -> (Gradients<T>, Vec<T>) {
        let rows = trace.rows;
        let mut grads: Vec<LayerParams<T>> = self
            .layers
            .iter()
            .map(|l| LayerParams::zeros(l.inputs, l.outputs))
            .collect();
        let mut input_grad = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            let g = &mut grads[l];
            let propagate = l > 0 || want_input;
            let mut prev = if propagate { vec![T::zero(); rows * layer.inputs] } else { Vec::new() };
            for o in 0..layer.outputs {
                let w = layer.row(o);
                let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut gb = T::zero();
                for n in 0..rows {
                    let d = delta[n * layer.outputs + o];
                    if d == T::zero() {
                        continue;
                    }
                    gb = gb + d;
                    axpy(d, &input[n * layer.inputs..(n + 1) * layer.inputs], gw);
                    if propagate {
                        axpy(d, w, &mut prev[n * layer.inputs..(n + 1) * layer.inputs]);
                    }
                }
                g.bias[o] = gb;
            }
            if l > 0 {
                // ReLU derivative: the stored activation is positive exactly
                // where the pre-activation was.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            } else if want_input {
                input_grad = prev;
            }
        }
        (grads, input_grad)
    }

    /// Gradient of logit `class` with respect to each input row.
    ///
    /// For the sigmoid head class 1 maps to the logit and class 0 to its
    /// negation, the log-odds of class 0.
    pub fn logit_input_gradients<X: Copy + Into<f64>>(&self, batch: &[X], class: usize) -> Result<Vec<T>> {
        let head = self.architecture.output;
        if class >= head.class_count() {
            return Err(Error::LabelOutOfRange {
                label: class,
                classes: head.class_count(),
            });
        }
        let trace = self.trace(batch)?;
        let width = head.width();
        let mut delta = vec![T::zero(); trace.rows * width];
        for n in 0..trace.rows {
            match head {
                OutputHead::Sigmoid => {
                    delta[n] = if class == 1 { T::one() } else { -T::one() };
                }
                OutputHead::Softmax(_) => delta[n * width + class] = T::one(),
            }
        }
        Ok(self.backpropagate(&trace, delta, true).1)
    }

    /// Value of the class logit used by the explainer (see
    /// [`Mlp::logit_input_gradients`]).
    pub fn class_logits<X: Copy + Into<f64>>(&self, batch: &[X], class: usize) -> Result<Vec<f64>> {
        let logits = self.logits(batch)?;
        Ok(match self.architecture.output {
            OutputHead::Sigmoid => logits
                .iter()
                .map(|z| if class == 1 { z.as_f64() } else { -z.as_f64() })
                .collect(),
            OutputHead::Softmax(n) => logits.chunks_exact(n).map(|r| r[class].as_f64()).collect(),
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

pub(crate) fn predict_from_probabilities(probs: &[f64], head: OutputHead) -> Vec<usize> {
    match head {
        OutputHead::Sigmoid => probs.iter().map(|&p| usize::from(p > 0.5)).collect(),
        OutputHead::Softmax(n) => probs
            .chunks_exact(n)
            .map(|row| {
                let mut best = 0;
                for c in 1..n {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect(),
    }
}

/// Mean negative log-likelihood of `targets`.
///
/// `width` is the number of probability columns: 1 for sigmoid outputs
/// (`P(class 1)`), otherwise one column per class. Probabilities are clamped
/// at [`LOG_CLAMP`].
pub fn loss(probs: &[f64], width: usize, targets: &[usize], kind: LossKind) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if probs.len() != targets.len() * width {
        return Err(Error::DimensionMismatch {
            expected: targets.len() * width,
            actual: probs.len(),
        });
    }
    let classes = if width == 1 { 2 } else { width };
    if kind == LossKind::BinaryCrossEntropy && classes != 2 {
        return Err(Error::InvalidInput(format!("binary cross-entropy over {classes} classes")));
    }
    let mut total = 0.0;
    for (n, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::LabelOutOfRange { label: t, classes });
        }
        let p = if width == 1 {
            if t == 1 {
                probs[n]
            } else {
                1.0 - probs[n]
            }
        } else {
            probs[n * width + t]
        };
        total -= libm::log(p.max(LOG_CLAMP));
    }
    Ok(total / targets.len() as f64)
}
