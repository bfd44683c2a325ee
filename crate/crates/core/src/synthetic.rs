//! Seeded Gaussian "fingerprint" worlds standing in for extracted prototypes.
//!
//! A world has one Gaussian class for real images and one per generator.
//! Because the generating densities are known, [`bayes_oracle`] gives the
//! maximum-likelihood label and hence an upper bound on any classifier's
//! accuracy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feature_store::{attribution_label, FeatureSet, Generator, PrototypeRecord};
use crate::seed;

/// Layer tag written into generated feature sets.
pub const SYNTHETIC_LAYER_TAG: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

impl Covariance {
    fn sigma(&self, i: usize) -> f64 {
        match self {
            Covariance::Isotropic(s) => *s,
            Covariance::Diagonal(d) => d[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldClass {
    /// `None` for real images.
    pub source: Option<Generator>,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub dim: usize,
    pub classes: Vec<WorldClass>,
    /// Real and fake samples drawn per generator subset, each.
    pub samples_per_class: usize,
    /// Same, for the held-out test partition; 0 disables it.
    pub test_samples_per_class: usize,
    pub seed: u64,
}

/// Which independent draw of the world to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    /// The per-generator subsets later split into train and validation.
    Subsets,
    Test,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidWorld(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if !self.classes.iter().any(|c| c.source.is_none()) {
            return bad("a real class is required".into());
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].iter().any(|o| o.source == c.source) {
                return bad(format!("class {i} repeats a source"));
            }
            if c.mean.len() != self.dim {
                return bad(format!("class {i} mean has length {}", c.mean.len()));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return bad(format!("class {i} mean is not finite"));
            }
            let ok = match &c.covariance {
                Covariance::Isotropic(s) => s.is_finite() && *s > 0.0,
                Covariance::Diagonal(d) => d.len() == self.dim && d.iter().all(|s| s.is_finite() && *s > 0.0),
            };
            if !ok {
                return bad(format!("class {i} needs positive finite sigma of length {}", self.dim));
            }
        }
        Ok(())
    }

    pub fn class_of(&self, source: Option<Generator>) -> Option<usize> {
        self.classes.iter().position(|c| c.source == source)
    }

    pub fn generators(&self) -> Vec<Generator> {
        self.classes.iter().filter_map(|c| c.source).collect()
    }
}

/// Mean layout: real images centred at the origin, every generator offset
/// along a shared "synthetic" direction by `real_offset` sigma plus its own
/// orthogonal direction so that any two generator means are exactly
/// `separation` sigma apart.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintLayout {
    pub dim: usize,
    pub sigma: f64,
    pub real_offset: f64,
    pub separation: f64,
    /// `(anchor, follower, distance)`: the follower's mean is moved to
    /// `distance` sigma from the anchor's, producing a confusable pair.
    pub families: Vec<(Generator, Generator, f64)>,
    pub generators: Vec<Generator>,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub seed: u64,
}

impl Default for FingerprintLayout {
    fn default() -> Self {
        Self {
            dim: 1280,
            sigma: 1.0,
            real_offset: 30.0,
            separation: 6.0,
            families: Vec::new(),
            generators: Generator::ALL.to_vec(),
            samples_per_class: 500,
            test_samples_per_class: 0,
            seed: 0,
        }
    }
}

fn orthonormal_directions(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(Error::InvalidWorld(format!("need dim >= {count} for the layout, got {dim}")));
    }
    let mut rng = seed::derived_rng(seed, &[0x64_69_72]);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    Ok(basis)
}

impl FingerprintLayout {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn build(&self) -> Result<WorldSpec> {
        if !(self.sigma > 0.0) || !self.real_offset.is_finite() || !(self.separation >= 0.0) {
            return Err(Error::InvalidWorld("sigma must be positive and offsets finite".into()));
        }
        let n_gen = self.generators.len();
        let dirs = orthonormal_directions(self.dim, n_gen + 1 + self.families.len(), self.seed)?;
        let common = &dirs[0];
        let per_gen = self.separation / core::f64::consts::SQRT_2 * self.sigma;
        let mut classes = vec![WorldClass {
            source: None,
            mean: vec![0.0; self.dim],
            covariance: Covariance::Isotropic(self.sigma),
        }];
        for (i, &g) in self.generators.iter().enumerate() {
            let mean = (0..self.dim)
                .map(|j| self.real_offset * self.sigma * common[j] + per_gen * dirs[i + 1][j])
                .collect();
            classes.push(WorldClass {
                source: Some(g),
                mean,
                covariance: Covariance::Isotropic(self.sigma),
            });
        }
        for (f, &(anchor, follower, distance)) in self.families.iter().enumerate() {
            let find = |g: Generator| {
                classes
                    .iter()
                    .position(|c| c.source == Some(g))
                    .ok_or_else(|| Error::InvalidWorld(format!("family member {g} not in the world")))
            };
            let (a, b) = (find(anchor)?, find(follower)?);
            let dir = &dirs[n_gen + 1 + f];
            classes[b].mean = (0..self.dim)
                .map(|j| classes[a].mean[j] + distance * self.sigma * dir[j])
                .collect();
        }
        classes.sort_by_key(|c| attribution_label(c.source));
        let spec = WorldSpec {
            dim: self.dim,
            classes,
            samples_per_class: self.samples_per_class,
            test_samples_per_class: self.test_samples_per_class,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_class(class: &WorldClass, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f32> {
    class
        .mean
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let z: f64 = rng.sample(StandardNormal);
            (m + class.covariance.sigma(i) * z) as f32
        })
        .collect()
}

/// One feature set per generator, each holding real and fake samples in
/// equal numbers. Every subset draws its own real images.
pub fn generate(spec: &WorldSpec, partition: Partition) -> Result<Vec<(Generator, FeatureSet)>> {
    spec.validate()?;
    let (count, part_id, prefix) = match partition {
        Partition::Subsets => (spec.samples_per_class, 0u64, ""),
        Partition::Test => (spec.test_samples_per_class, 1u64, "test-"),
    };
    let real = &spec.classes[spec.class_of(None).expect("validated")];
    spec.generators()
        .into_iter()
        .map(|g| {
            let fake = &spec.classes[spec.class_of(Some(g)).expect("listed")];
            let mut records = Vec::with_capacity(2 * count);
            for (class, auth) in [(real, 0u64), (fake, 1u64)] {
                let mut rng = seed::derived_rng(spec.seed, &[part_id, g.index() as u64, auth]);
                let kind = if auth == 0 { "real" } else { "fake" };
                for i in 0..count {
                    let id = format!("{prefix}{}-{kind}-{i:05}", g.slug());
                    records.push(
                        PrototypeRecord::new(id, draw_class(class, &mut rng), class.source)
                            .with_class_hint((i % 1000) as u16),
                    );
                }
            }
            Ok((g, FeatureSet::new(spec.dim, SYNTHETIC_LAYER_TAG, records)?))
        })
        .collect()
}

/// Log-density of `query` under class `c`, up to the shared constant.
pub fn log_likelihood<X: Copy + Into<f64>>(spec: &WorldSpec, class: usize, query: &[X]) -> f64 {
    let c = &spec.classes[class];
    let mut ll = 0.0;
    for (i, (&x, &m)) in query.iter().zip(&c.mean).enumerate() {
        let s = c.covariance.sigma(i);
        let z = (x.into() - m) / s;
        ll -= 0.5 * z * z + libm::log(s);
    }
    ll
}

/// Maximum-likelihood class index among `candidates` (indices into
/// `spec.classes`); ties go to the smallest index.
pub fn bayes_oracle_among<X: Copy + Into<f64>>(spec: &WorldSpec, query: &[X], candidates: &[usize]) -> Result<usize> {
    if query.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: query.len(),
        });
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, f64)> = None;
    for c in sorted {
        if c >= spec.classes.len() {
            return Err(Error::LabelOutOfRange {
                label: c,
                classes: spec.classes.len(),
            });
        }
        let ll = log_likelihood(spec, c, query);
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((c, ll));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::Empty("candidate classes"))
}

/// Maximum-likelihood class over all classes of the world.
pub fn bayes_oracle<X: Copy + Into<f64>>(spec: &WorldSpec, query: &[X]) -> Result<usize> {
    let all: Vec<usize> = (0..spec.classes.len()).collect();
    bayes_oracle_among(spec, query, &all)
}
