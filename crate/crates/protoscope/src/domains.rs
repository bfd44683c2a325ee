//! Loading per-generator subsets from FPRO files and shaping them into
//! detection domains and attribution classes.

use std::path::{Path, PathBuf};

use protoscope_core::data::LabeledData;
use protoscope_core::evaluation::DetectionDomain;
use protoscope_core::feature_store::{attribution_classes, split_train_val, FeatureSet, Generator};
use protoscope_core::seed;

use crate::error::{AppError, Result};
use crate::fpro::read_feature_file;

/// Stream id for the internal train/validation split.
const SPLIT_STREAM: u64 = 0x73_706c_6974;

/// One generator's training and validation records.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub generator: Generator,
    pub train: FeatureSet,
    pub validation: FeatureSet,
}

/// The single generator whose fakes a subset file holds.
pub fn subset_generator(set: &FeatureSet, path: &Path) -> Result<Generator> {
    match set.generators()[..] {
        [g] => Ok(g),
        [] => Err(AppError::Schema(format!("{}: no fake records, cannot tell the generator", path.display()))),
        _ => Err(AppError::Schema(format!(
            "{}: holds several generators; expected one subset per file",
            path.display()
        ))),
    }
}

fn read_keyed(paths: &[PathBuf]) -> Result<Vec<(Generator, FeatureSet)>> {
    let mut out: Vec<(Generator, FeatureSet)> = Vec::with_capacity(paths.len());
    for p in paths {
        let set = read_feature_file(p)?;
        let g = subset_generator(&set, p)?;
        if out.iter().any(|(h, _)| *h == g) {
            return Err(AppError::Schema(format!("{}: second subset for {g}", p.display())));
        }
        if let Some((_, first)) = out.first() {
            if first.dim() != set.dim() || first.layer_tag() != set.layer_tag() {
                return Err(AppError::Schema(format!(
                    "{}: layer {:?} dim {} differs from {:?} dim {}",
                    p.display(),
                    set.layer_tag(),
                    set.dim(),
                    first.layer_tag(),
                    first.dim()
                )));
            }
        }
        out.push((g, set));
    }
    out.sort_by_key(|(g, _)| *g);
    Ok(out)
}

/// Reads per-generator subset files, in canonical generator order.
pub fn read_subsets(paths: &[PathBuf]) -> Result<Vec<(Generator, FeatureSet)>> {
    if paths.is_empty() {
        return Err(AppError::Usage("no feature files given".into()));
    }
    read_keyed(paths)
}

/// Seed of the internal split of generator `g`'s subset.
pub fn split_seed(seed: u64, g: Generator) -> u64 {
    seed::derive(seed, &[SPLIT_STREAM, g.index() as u64])
}

/// Splits in-memory subsets the same way [`load_subsets`] does without
/// explicit validation files.
pub fn split_subsets(sets: Vec<(Generator, FeatureSet)>, train_fraction: f64, seed: u64) -> Result<Vec<Subset>> {
    sets.into_iter()
        .map(|(generator, set)| {
            let split = split_train_val(&set, train_fraction, split_seed(seed, generator))?;
            Ok(Subset {
                generator,
                train: split.train,
                validation: split.validation,
            })
        })
        .collect()
}

/// Training subsets from `features`; validation sets from `val` when given,
/// otherwise from a seeded stratified split of each subset.
pub fn load_subsets(features: &[PathBuf], val: &[PathBuf], train_fraction: f64, seed: u64) -> Result<Vec<Subset>> {
    let train = read_subsets(features)?;
    if val.is_empty() {
        return split_subsets(train, train_fraction, seed);
    }
    let mut vals = read_keyed(val)?;
    if train[0].1.dim() != vals[0].1.dim() {
        return Err(AppError::Schema("validation files differ in dimension from training files".into()));
    }
    train
        .into_iter()
        .map(|(generator, train)| {
            let i = vals
                .iter()
                .position(|(g, _)| *g == generator)
                .ok_or_else(|| AppError::Schema(format!("no validation file for {generator}")))?;
            Ok(Subset {
                generator,
                train,
                validation: vals.swap_remove(i).1,
            })
        })
        .collect()
}

pub fn detection_domains(subsets: &[Subset]) -> Result<Vec<DetectionDomain>> {
    subsets
        .iter()
        .map(|s| {
            Ok(DetectionDomain {
                label: s.generator.name().to_string(),
                train: s.train.clone(),
                validation: LabeledData::detection(&s.validation)?,
            })
        })
        .collect()
}

/// Real images come from `real_source`'s subset when given, otherwise from
/// the first subset in canonical order.
pub fn real_source(subsets: &[Generator], requested: Option<Generator>) -> Result<Generator> {
    match requested {
        Some(g) if subsets.contains(&g) => Ok(g),
        Some(g) => Err(AppError::Usage(format!("real source {g} is not among the subsets"))),
        None => subsets.first().copied().ok_or_else(|| AppError::Usage("no subsets".into())),
    }
}

/// The nine attribution classes of `sets`, flattened with attribution
/// labels.
pub fn attribution_data(sets: &[FeatureSet], real: Generator) -> Result<(Vec<FeatureSet>, LabeledData)> {
    let classes = attribution_classes(sets, real)?;
    let all = FeatureSet::concat(&classes.iter().collect::<Vec<_>>())?;
    Ok((classes, LabeledData::attribution(&all)?))
}

pub fn require_all_generators(gens: &[Generator]) -> Result<()> {
    let missing: Vec<&str> = Generator::ALL.iter().filter(|g| !gens.contains(g)).map(|g| g.name()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(AppError::Schema(format!(
            "attribution needs all eight generator subsets; missing {}",
            missing.join(", ")
        )))
    }
}
