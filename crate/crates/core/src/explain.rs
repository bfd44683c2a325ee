//! Expected-gradients attributions over trained networks, per-class top-k
//! feature rankings and overlap analysis.
//!
//! The attribution of feature `i` for class `c` is the Monte-Carlo estimate
//! of `E_b E_alpha[(x_i - b_i) * d f_c / d x_i (b + alpha (x - b))]`, where
//! `f_c` is the pre-softmax logit, `b` ranges over a background set and
//! `alpha ~ U(0, 1)`.
//!
//! Draws are stratified over the background: every background point gets
//! the same share of interpolation draws (`max(n_samples, |background|)`
//! draws in total), and per-point averages are combined with equal weight.
//! For a linear model this makes the estimate exactly
//! `w * (x - mean(background))` regardless of seed or sample count.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{Mlp, Real};
use crate::seed;

const GRADIENT_CHUNK_ROWS: usize = 256;

fn interpolation_points<X: Copy + Into<f64>>(
    x: &[X],
    background: &[f32],
    dim: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if background.is_empty() {
        return Err(Error::Empty("background"));
    }
    if x.len() != dim || !background.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: if x.len() != dim { x.len() } else { background.len() % dim },
        });
    }
    let n_background = background.len() / dim;
    let total = n_samples.max(n_background);
    let mut rng = seed::rng(seed);
    let mut points = Vec::with_capacity(total * dim);
    let mut owner = Vec::with_capacity(total);
    for j in 0..total {
        let b = j % n_background;
        let alpha: f64 = rng.random();
        let row = &background[b * dim..(b + 1) * dim];
        points.extend(x.iter().zip(row).map(|(&xi, &bi)| {
            let bi = bi as f64;
            bi + alpha * (xi.into() - bi)
        }));
        owner.push(b);
    }
    Ok((points, owner))
}

fn combine<X: Copy + Into<f64>>(
    x: &[X],
    background: &[f32],
    owner: &[usize],
    gradients: &[f64],
) -> Vec<f64> {
    let dim = x.len();
    let n_background = background.len() / dim;
    let mut sums = vec![0.0f64; n_background * dim];
    let mut counts = vec![0usize; n_background];
    for (j, &b) in owner.iter().enumerate() {
        counts[b] += 1;
        let g = &gradients[j * dim..(j + 1) * dim];
        for (s, gi) in sums[b * dim..(b + 1) * dim].iter_mut().zip(g) {
            *s += gi;
        }
    }
    let mut out = vec![0.0f64; dim];
    for b in 0..n_background {
        let scale = 1.0 / (counts[b] as f64 * n_background as f64);
        let row = &background[b * dim..(b + 1) * dim];
        for i in 0..dim {
            out[i] += (x[i].into() - row[i] as f64) * sums[b * dim + i] * scale;
        }
    }
    out
}

fn gradients_at<T: Real>(model: &Mlp<T>, points: &[f64], class: usize) -> Result<Vec<f64>> {
    let dim = model.architecture().input_dim;
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(GRADIENT_CHUNK_ROWS * dim) {
        out.extend(model.logit_input_gradients(chunk, class)?.into_iter().map(Real::as_f64));
    }
    Ok(out)
}

/// Expected-gradients attribution of `x` towards logit `class`.
///
/// `background` is a row-major matrix with the model's input width.
pub fn expected_gradients<T: Real, X: Copy + Into<f64>>(
    model: &Mlp<T>,
    x: &[X],
    class: usize,
    background: &[f32],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let dim = model.architecture().input_dim;
    let (points, owner) = interpolation_points(x, background, dim, n_samples, seed)?;
    let grads = gradients_at(model, &points, class)?;
    Ok(combine(x, background, &owner, &grads))
}

/// Attributions of `x` towards every class logit, sharing one set of
/// interpolation draws. Returns one vector per class.
pub fn expected_gradients_all_classes<T: Real, X: Copy + Into<f64>>(
    model: &Mlp<T>,
    x: &[X],
    background: &[f32],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let dim = model.architecture().input_dim;
    let (points, owner) = interpolation_points(x, background, dim, n_samples, seed)?;
    (0..model.architecture().output.class_count())
        .map(|c| {
            let grads = gradients_at(model, &points, c)?;
            Ok(combine(x, background, &owner, &grads))
        })
        .collect()
}

/// Attributions towards one class over a set of explained samples,
/// row-major `samples x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAttributions {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ClassAttributions {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite attribution".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn samples(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn get(&self, sample: usize, feature: usize) -> f64 {
        self.values[sample * self.dim + feature]
    }

    /// Mean absolute attribution of every feature.
    pub fn mean_abs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.values.chunks_exact(self.dim) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += libm::fabs(*v);
            }
        }
        let n = self.samples().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedFeature {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKReport {
    pub k: usize,
    /// Per class, features by descending mean |attribution|.
    pub classes: Vec<Vec<RankedFeature>>,
    /// Pairwise `|top_i ∩ top_j| / k * 100`.
    pub overlap: Vec<Vec<f64>>,
}

impl TopKReport {
    pub fn indices(&self, class: usize) -> Vec<usize> {
        self.classes[class].iter().map(|f| f.index).collect()
    }

    /// Features present in both classes' top-k, in `a`'s rank order.
    pub fn shared(&self, a: usize, b: usize) -> Vec<usize> {
        let other = self.indices(b);
        self.indices(a).into_iter().filter(|i| other.contains(i)).collect()
    }
}

/// Ranks features per class by mean absolute attribution (ties to the lower
/// index) and computes the pairwise top-k overlap matrix.
pub fn top_k_per_class(per_class: &[ClassAttributions], k: usize) -> Result<TopKReport> {
    let first = per_class.first().ok_or(Error::Empty("attribution list"))?;
    if k == 0 || k > first.dim {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={}", first.dim)));
    }
    let mut classes = Vec::with_capacity(per_class.len());
    for a in per_class {
        if a.dim != first.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                actual: a.dim,
            });
        }
        let scores = a.mean_abs();
        let mut order: Vec<usize> = (0..a.dim).collect();
        order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
        classes.push(
            order[..k]
                .iter()
                .map(|&index| RankedFeature {
                    index,
                    score: scores[index],
                })
                .collect::<Vec<_>>(),
        );
    }
    let n = classes.len();
    let mut overlap = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let shared = classes[i]
                .iter()
                .filter(|f| classes[j].iter().any(|g| g.index == f.index))
                .count();
            overlap[i][j] = shared as f64 * 100.0 / k as f64;
        }
    }
    Ok(TopKReport { k, classes, overlap })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of paired samples whose attribution for `feature` has the same
/// sign in both classes.
pub fn sign_agreement(feature: usize, a: &ClassAttributions, b: &ClassAttributions) -> Result<f64> {
    if a.dim != b.dim || a.samples() != b.samples() {
        return Err(Error::InvalidInput("attribution tensors differ in shape".into()));
    }
    if feature >= a.dim {
        return Err(Error::InvalidInput(format!("feature {feature} out of range")));
    }
    if a.samples() == 0 {
        return Err(Error::Empty("attribution tensor"));
    }
    let agree = (0..a.samples())
        .filter(|&s| sign(a.get(s, feature)) == sign(b.get(s, feature)))
        .count();
    Ok(agree as f64 / a.samples() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignAgreement {
    pub class_a: usize,
    pub class_b: usize,
    pub feature: usize,
    pub agreement: f64,
}

/// Sign agreement of every feature shared between the top-k of each class
/// pair `a < b`.
pub fn sign_agreement_table(report: &TopKReport, per_class: &[ClassAttributions]) -> Result<Vec<SignAgreement>> {
    let mut out = Vec::new();
    for a in 0..report.classes.len() {
        for b in a + 1..report.classes.len() {
            for feature in report.shared(a, b) {
                out.push(SignAgreement {
                    class_a: a,
                    class_b: b,
                    feature,
                    agreement: sign_agreement(feature, &per_class[a], &per_class[b])?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{LayerParams, MlpArchitecture, OutputHead};

    fn linear_model(w: &[f64], bias: f64) -> Mlp<f64> {
        let d = w.len();
        let arch = MlpArchitecture::new(d, &[], OutputHead::Softmax(2)).unwrap();
        let mut weights = vec![0.0; d];
        weights.extend_from_slice(w);
        let layer = LayerParams {
            inputs: d,
            outputs: 2,
            weights,
            bias: vec![0.0, bias],
        };
        Mlp::from_layers(arch, vec![layer], 0).unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let w = [0.5, -2.0, 1.5];
        let m = linear_model(&w, 0.3);
        let x = [1.0f64, 2.0, -1.0];
        let bg: Vec<f32> = vec![0.0, 1.0, 2.0, 2.0, -1.0, 0.5, 1.0, 1.0, 1.0];
        let mean = [1.0, 1.0 / 3.0, 3.5 / 3.0];
        for (n, s) in [(1, 0), (7, 3), (200, 9)] {
            let a = expected_gradients(&m, &x, 1, &bg, n, s).unwrap();
            for i in 0..3 {
                assert!((a[i] - w[i] * (x[i] - mean[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn background_of_x_gives_zero() {
        let m = Mlp::<f64>::new(MlpArchitecture::new(3, &[5], OutputHead::Softmax(3)).unwrap(), 2);
        let x = [0.2f32, -0.4, 1.1];
        let a = expected_gradients(&m, &x, 2, &x, 50, 1).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        assert_eq!(expected_gradients(&m, &x, 0, &[], 5, 0), Err(Error::Empty("background")));
    }

    #[test]
    fn all_classes_share_draws() {
        let m = Mlp::<f64>::new(MlpArchitecture::new(4, &[6], OutputHead::Softmax(3)).unwrap(), 5);
        let x = [1.0f64, 0.0, -1.0, 0.5];
        let bg = [0.1f32, 0.2, 0.3, 0.4, -0.5, 0.0, 0.5, 1.0];
        let all = expected_gradients_all_classes(&m, &x, &bg, 16, 8).unwrap();
        for c in 0..3 {
            assert_eq!(all[c], expected_gradients(&m, &x, c, &bg, 16, 8).unwrap());
        }
    }

    fn attrs(rows: &[&[f64]]) -> ClassAttributions {
        ClassAttributions::new(rows[0].len(), rows.concat()).unwrap()
    }

    #[test]
    fn overlap_extremes() {
        let a = attrs(&[&[5.0, 4.0, 0.0, 0.0], &[-5.0, 4.0, 0.0, 0.1]]);
        let b = attrs(&[&[0.0, 0.0, 3.0, 2.0], &[0.0, 0.0, 3.0, -2.0]]);
        let r = top_k_per_class(&[a.clone(), a.clone(), b], 2).unwrap();
        assert_eq!(r.indices(0), vec![0, 1]);
        assert_eq!(r.overlap[0][1], 100.0);
        assert_eq!(r.overlap[0][2], 0.0);
        for i in 0..3 {
            assert_eq!(r.overlap[i][i], 100.0);
            for j in 0..3 {
                assert_eq!(r.overlap[i][j], r.overlap[j][i]);
            }
        }
        assert!(top_k_per_class(&[a], 5).is_err());
    }

    #[test]
    fn sign_agreement_extremes() {
        let a = attrs(&[&[1.0, -2.0], &[-3.0, 4.0], &[0.5, 0.5]]);
        let neg = ClassAttributions::new(2, a.values.iter().map(|v| -v).collect()).unwrap();
        assert_eq!(sign_agreement(0, &a, &a).unwrap(), 1.0);
        assert_eq!(sign_agreement(1, &a, &neg).unwrap(), 0.0);
    }

    #[test]
    fn independent_signs_agree_half_the_time() {
        let mut rng = seed::rng(3);
        let n = 20_000;
        let mut draw = || ClassAttributions::new(1, (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let (a, b) = (draw(), draw());
        let s = sign_agreement(0, &a, &b).unwrap();
        // Binomial standard error is 0.0035 at n = 20,000.
        assert!((s - 0.5).abs() < 0.015, "{s}");
    }
}
