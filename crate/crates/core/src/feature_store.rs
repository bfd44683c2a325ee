//! Prototype records, feature sets, stratified train/validation splits and
//! balanced support sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::knn::{SupportEntry, SupportSet};
use crate::seed;

/// Whether an image is a camera photograph or produced by a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Authenticity {
    Real,
    Fake,
}

impl Authenticity {
    /// Detection label: 0 for real, 1 for fake.
    pub fn label(self) -> usize {
        match self {
            Authenticity::Real => 0,
            Authenticity::Fake => 1,
        }
    }
}

/// The eight generator sources of the benchmark subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Generator {
    Midjourney,
    Sdv14,
    Sdv15,
    Adm,
    Glide,
    Wukong,
    Vqdm,
    BigGan,
}

impl Generator {
    pub const ALL: [Generator; 8] = [
        Generator::Midjourney,
        Generator::Sdv14,
        Generator::Sdv15,
        Generator::Adm,
        Generator::Glide,
        Generator::Wukong,
        Generator::Vqdm,
        Generator::BigGan,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Generator> {
        Self::ALL.get(index).copied()
    }

    /// Canonical display name, also used in the FPRO string table.
    pub fn name(self) -> &'static str {
        match self {
            Generator::Midjourney => "Midjourney",
            Generator::Sdv14 => "SDV1.4",
            Generator::Sdv15 => "SDV1.5",
            Generator::Adm => "ADM",
            Generator::Glide => "Glide",
            Generator::Wukong => "Wukong",
            Generator::Vqdm => "VQDM",
            Generator::BigGan => "BigGAN",
        }
    }

    /// Lower-case identifier usable in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Generator::Midjourney => "midjourney",
            Generator::Sdv14 => "sdv14",
            Generator::Sdv15 => "sdv15",
            Generator::Adm => "adm",
            Generator::Glide => "glide",
            Generator::Wukong => "wukong",
            Generator::Vqdm => "vqdm",
            Generator::BigGan => "biggan",
        }
    }

    /// Parses either the canonical name or the slug, ignoring case and the
    /// punctuation in version numbers ("SDV1.4", "sdv14", "sd-v1.4").
    pub fn parse(name: &str) -> Option<Generator> {
        let norm: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Self::ALL.iter().copied().find(|g| g.slug() == norm)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of classes in source attribution: real plus the eight generators.
pub const ATTRIBUTION_CLASSES: usize = 9;

/// Attribution label: 0 for real images, `1 + generator index` otherwise.
pub fn attribution_label(generator: Option<Generator>) -> usize {
    generator.map_or(0, |g| g.index() + 1)
}

pub fn attribution_class_name(label: usize) -> &'static str {
    match label {
        0 => "Real",
        l => Generator::from_index(l - 1).map_or("?", Generator::name),
    }
}

/// One image's prototype vector and its labels.
///
/// Authenticity is derived from the generator: a record is real exactly when
/// it has no generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeRecord {
    pub image_id: String,
    pub features: Vec<f32>,
    pub generator: Option<Generator>,
    /// ImageNet class in `0..1000`, when known.
    pub class_hint: Option<u16>,
}

impl PrototypeRecord {
    pub fn new(
        image_id: impl Into<String>,
        features: Vec<f32>,
        generator: Option<Generator>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            features,
            generator,
            class_hint: None,
        }
    }

    pub fn with_class_hint(mut self, class_hint: u16) -> Self {
        self.class_hint = Some(class_hint);
        self
    }

    pub fn authenticity(&self) -> Authenticity {
        if self.generator.is_some() {
            Authenticity::Fake
        } else {
            Authenticity::Real
        }
    }
}

/// An immutable collection of prototypes extracted from one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    layer_tag: String,
    records: Vec<PrototypeRecord>,
}

impl FeatureSet {
    /// Builds a set, checking every record's length, finiteness and id
    /// uniqueness.
    pub fn new(
        dim: usize,
        layer_tag: impl Into<String>,
        records: Vec<PrototypeRecord>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.features.len(),
                });
            }
            if let Some(index) = r.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature {
                    image_id: r.image_id.clone(),
                    index,
                });
            }
            if let Some(h) = r.class_hint {
                if h >= 1000 {
                    return Err(Error::InvalidInput(format!(
                        "class_hint {h} outside 0..1000 for {:?}",
                        r.image_id
                    )));
                }
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateImageId(r.image_id.clone()));
            }
        }
        Ok(Self {
            dim,
            layer_tag: layer_tag.into(),
            records,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_tag(&self) -> &str {
        &self.layer_tag
    }

    pub fn records(&self) -> &[PrototypeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PrototypeRecord> {
        self.records
    }

    /// Generators present in the set, in canonical order.
    pub fn generators(&self) -> Vec<Generator> {
        let set: BTreeSet<Generator> = self.records.iter().filter_map(|r| r.generator).collect();
        set.into_iter().collect()
    }

    /// A new set with the records matching `keep`, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&PrototypeRecord) -> bool) -> FeatureSet {
        FeatureSet {
            dim: self.dim,
            layer_tag: self.layer_tag.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Concatenates sets sharing a dimension. The layer tag of the first set
    /// is kept.
    pub fn concat(sets: &[&FeatureSet]) -> Result<FeatureSet> {
        let first = sets.first().ok_or(Error::Empty("feature set list"))?;
        let records = sets
            .iter()
            .flat_map(|s| s.records.iter().cloned())
            .collect();
        FeatureSet::new(first.dim, first.layer_tag.clone(), records)
    }

    pub fn count_real(&self) -> usize {
        self.records.iter().filter(|r| r.generator.is_none()).count()
    }

    pub fn count_fake(&self) -> usize {
        self.len() - self.count_real()
    }
}

/// Disjoint train/validation partition of one feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: FeatureSet,
    pub validation: FeatureSet,
    pub seed: u64,
}

fn stratum_name(key: Option<Generator>) -> String {
    match key {
        None => "Real".to_string(),
        Some(g) => format!("Fake/{g}"),
    }
}

/// Splits `set` into train and validation parts, stratified by
/// (authenticity, generator).
///
/// Each stratum contributes `round(train_fraction * n)` records to training,
/// clamped so both sides keep at least one record. Output order follows the
/// input order.
pub fn split_train_val(set: &FeatureSet, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    let mut strata: BTreeMap<Option<Generator>, Vec<usize>> = BTreeMap::new();
    for (i, r) in set.records.iter().enumerate() {
        strata.entry(r.generator).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    let mut in_train = alloc::vec![false; set.len()];
    for (key, mut members) in strata {
        let n = members.len();
        if n < 2 {
            return Err(Error::StratumTooSmall {
                stratum: stratum_name(key),
                count: n,
            });
        }
        let n_train = (libm::floor(train_fraction * n as f64 + 0.5) as usize).clamp(1, n - 1);
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (r, t) in set.records.iter().zip(in_train) {
        if t {
            train.push(r.clone());
        } else {
            validation.push(r.clone());
        }
    }
    Ok(SplitPair {
        train: FeatureSet {
            dim: set.dim,
            layer_tag: set.layer_tag.clone(),
            records: train,
        },
        validation: FeatureSet {
            dim: set.dim,
            layer_tag: set.layer_tag.clone(),
            records: validation,
        },
        seed,
    })
}

fn draw<'a>(
    pool: &[&'a PrototypeRecord],
    count: usize,
    class: &str,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<&'a PrototypeRecord>> {
    if pool.len() < count {
        return Err(Error::InsufficientRecords {
            class: class.to_string(),
            needed: count,
            available: pool.len(),
        });
    }
    let mut picked = index::sample(rng, pool.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}

/// Samples a balanced real/fake support set without replacement.
///
/// Labels are 0 for real and 1 for fake.
pub fn sample_support(train: &FeatureSet, size: usize, seed: u64) -> Result<SupportSet> {
    if size == 0 || !size.is_multiple_of(2) {
        return Err(Error::SupportNotDivisible { size, classes: 2 });
    }
    let half = size / 2;
    let real: Vec<&PrototypeRecord> = train.records.iter().filter(|r| r.generator.is_none()).collect();
    let fake: Vec<&PrototypeRecord> = train.records.iter().filter(|r| r.generator.is_some()).collect();
    let mut rng = seed::rng(seed);
    let real = draw(&real, half, "Real", &mut rng)?;
    let fake = draw(&fake, half, "Fake", &mut rng)?;
    let entries = real
        .into_iter()
        .map(|r| SupportEntry::new(r.features.clone(), 0))
        .chain(fake.into_iter().map(|r| SupportEntry::new(r.features.clone(), 1)))
        .collect();
    SupportSet::new(train.dim, 2, entries)
}

/// Samples an equal number of records from every class set; the class label
/// of each entry is its position in `classes`.
pub fn sample_attribution_support(
    classes: &[FeatureSet],
    size: usize,
    seed: u64,
) -> Result<SupportSet> {
    let n = classes.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 classes, got {n}")));
    }
    if size == 0 || !size.is_multiple_of(n) {
        return Err(Error::SupportNotDivisible { size, classes: n });
    }
    let dim = classes[0].dim;
    let per_class = size / n;
    let mut rng = seed::rng(seed);
    let mut entries = Vec::with_capacity(size);
    for (label, set) in classes.iter().enumerate() {
        if set.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: set.dim,
            });
        }
        let pool: Vec<&PrototypeRecord> = set.records.iter().collect();
        let name = format!("class {label}");
        for r in draw(&pool, per_class, &name, &mut rng)? {
            entries.push(SupportEntry::new(r.features.clone(), label));
        }
    }
    SupportSet::new(dim, n, entries)
}

/// Groups per-generator training subsets into the nine attribution classes:
/// real images from `real_source`'s subset, then each generator's fakes in
/// canonical order.
pub fn attribution_classes(subsets: &[FeatureSet], real_source: Generator) -> Result<Vec<FeatureSet>> {
    let first = subsets.first().ok_or(Error::Empty("generator subsets"))?;
    let mut classes: Vec<Vec<PrototypeRecord>> = alloc::vec![Vec::new(); ATTRIBUTION_CLASSES];
    for set in subsets {
        if set.dim != first.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                actual: set.dim,
            });
        }
        let is_real_source = set.generators().contains(&real_source);
        for r in &set.records {
            match r.generator {
                Some(g) => classes[attribution_label(Some(g))].push(r.clone()),
                None if is_real_source => classes[0].push(r.clone()),
                None => {}
            }
        }
    }
    classes
        .into_iter()
        .map(|records| FeatureSet::new(first.dim, first.layer_tag.clone(), records))
        .collect()
}
