//! Plain-text synthetic world configs: one `key = value` per line, `#`
//! starts a comment.
//!
//! ```text
//! dim = 1280
//! sigma = 1
//! real_offset = 30
//! separation = 6
//! samples_per_class = 500
//! test_samples_per_class = 250
//! seed = 7
//! generators = midjourney, sdv14, sdv15, adm, glide, wukong, vqdm, biggan
//! family = sdv14, sdv15, 2     # repeatable: anchor, follower, distance in sigma
//! ```
//!
//! Keys that are absent keep the [`FingerprintLayout`] defaults.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use protoscope_core::feature_store::Generator;
use protoscope_core::synthetic::FingerprintLayout;

use crate::error::{AppError, Result};

/// The nine-class, 1280-dimensional, 6-sigma world used by the end-to-end
/// demo.
pub const DEMO: &str = include_str!("../configs/demo.world");

/// A small world for quick smoke runs.
pub const QUICK: &str = include_str!("../configs/quick.world");

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "demo" => Some(DEMO),
        "quick" => Some(QUICK),
        _ => None,
    }
}

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| AppError::Config {
        line,
        message: format!("{key}: cannot parse {value:?}"),
    })
}

fn generator(line: usize, name: &str) -> Result<Generator> {
    Generator::parse(name).ok_or_else(|| AppError::Config {
        line,
        message: format!("unknown generator {name:?}"),
    })
}

pub fn parse_layout(text: &str) -> Result<FingerprintLayout> {
    let mut layout = FingerprintLayout::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| AppError::Config {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key != "family" && !seen.insert(key.to_string()) {
            return Err(AppError::Config {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        match key {
            "dim" => layout.dim = number(line, key, value)?,
            "sigma" => layout.sigma = number(line, key, value)?,
            "real_offset" => layout.real_offset = number(line, key, value)?,
            "separation" => layout.separation = number(line, key, value)?,
            "samples_per_class" => layout.samples_per_class = number(line, key, value)?,
            "test_samples_per_class" => layout.test_samples_per_class = number(line, key, value)?,
            "seed" => layout.seed = number(line, key, value)?,
            "generators" => {
                layout.generators = value
                    .split(',')
                    .map(|g| generator(line, g.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "family" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                let [a, b, d] = parts[..] else {
                    return Err(AppError::Config {
                        line,
                        message: "family expects `anchor, follower, distance`".into(),
                    });
                };
                layout.families.push((generator(line, a)?, generator(line, b)?, number(line, key, d)?));
            }
            _ => {
                return Err(AppError::Config {
                    line,
                    message: format!("unknown key {key:?}"),
                })
            }
        }
    }
    Ok(layout)
}

/// Canonical text form; parsing it yields the same layout.
pub fn render_layout(layout: &FingerprintLayout) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim = {}", layout.dim);
    let _ = writeln!(s, "sigma = {}", layout.sigma);
    let _ = writeln!(s, "real_offset = {}", layout.real_offset);
    let _ = writeln!(s, "separation = {}", layout.separation);
    let _ = writeln!(s, "samples_per_class = {}", layout.samples_per_class);
    let _ = writeln!(s, "test_samples_per_class = {}", layout.test_samples_per_class);
    let _ = writeln!(s, "seed = {}", layout.seed);
    let names: Vec<&str> = layout.generators.iter().map(|g| g.slug()).collect();
    let _ = writeln!(s, "generators = {}", names.join(", "));
    for (a, b, d) in &layout.families {
        let _ = writeln!(s, "family = {}, {}, {}", a.slug(), b.slug(), d);
    }
    s
}

pub fn read_layout(path: impl AsRef<Path>) -> Result<FingerprintLayout> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_layout(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_build() {
        for text in [DEMO, QUICK] {
            let layout = parse_layout(text).unwrap();
            assert!(layout.build().is_ok());
            assert_eq!(parse_layout(&render_layout(&layout)).unwrap(), layout);
        }
        let demo = parse_layout(DEMO).unwrap();
        assert_eq!((demo.dim, demo.generators.len(), demo.separation), (1280, 8, 6.0));
    }

    #[test]
    fn families_and_errors() {
        let layout = parse_layout("dim = 32\nfamily = SDV1.4, sdv15, 1.5 # close pair\n").unwrap();
        assert_eq!(layout.families, vec![(Generator::Sdv14, Generator::Sdv15, 1.5)]);
        let err = |t: &str| match parse_layout(t) {
            Err(AppError::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("dim = 3\nbogus = 1"), 2);
        assert_eq!(err("dim = x"), 1);
        assert_eq!(err("dim = 3\ndim = 4"), 2);
        assert_eq!(err("generators = adm, dalle"), 1);
        assert_eq!(err("family = adm, glide"), 1);
        assert_eq!(err("just words"), 1);
    }
}
