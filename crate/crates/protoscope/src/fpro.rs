//! FPRO prototype files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "FPRO" | version u16 = 1 | dim u32 | record_count u64
//! layer_tag: u16 length + UTF-8
//! generator table: u16 count, then u16 length + UTF-8 per name
//! records: image_id (u16 length + UTF-8) | authenticity u8 (0 real, 1 fake)
//!          | generator_index u16 (0xFFFF = none) | class_hint i32 (-1 = absent)
//!          | dim x f32 features
//! ```
//!
//! The generator table lists the generators present in the set in canonical
//! order, by canonical name.

use std::fs;
use std::path::Path;

use protoscope_core::feature_store::{FeatureSet, Generator, PrototypeRecord};

use crate::binio::{put_f32s, put_string, Reader};
use crate::error::{AppError, Result};

pub const MAGIC: [u8; 4] = *b"FPRO";
pub const VERSION: u16 = 1;
const NO_GENERATOR: u16 = 0xFFFF;

/// Serializes `set` to FPRO bytes.
pub fn encode(set: &FeatureSet) -> Result<Vec<u8>> {
    let dim = u32::try_from(set.dim()).map_err(|_| AppError::Malformed("dim exceeds u32".into()))?;
    let table = set.generators();
    let mut out = Vec::with_capacity(64 + set.len() * (24 + 4 * set.dim()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    put_string(&mut out, set.layer_tag(), "layer tag")?;
    out.extend_from_slice(&(table.len() as u16).to_le_bytes());
    for g in &table {
        put_string(&mut out, g.name(), "generator name")?;
    }
    for r in set.records() {
        put_string(&mut out, &r.image_id, "image id")?;
        out.push(r.authenticity().label() as u8);
        let index = match r.generator {
            Some(g) => table.iter().position(|t| *t == g).expect("table lists every generator") as u16,
            None => NO_GENERATOR,
        };
        out.extend_from_slice(&index.to_le_bytes());
        let hint = r.class_hint.map_or(-1, i32::from);
        out.extend_from_slice(&hint.to_le_bytes());
        put_f32s(&mut out, &r.features);
    }
    Ok(out)
}

/// Parses FPRO bytes, validating every feature-set invariant.
pub fn decode(bytes: &[u8]) -> Result<FeatureSet> {
    let mut rd = Reader::new(bytes);
    let magic = rd.array::<4>()?;
    if magic != MAGIC {
        return Err(AppError::BadMagic {
            expected: "FPRO",
            found: magic,
        });
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(AppError::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let dim = rd.u32()? as usize;
    if dim == 0 {
        return Err(protoscope_core::Error::ZeroDimension.into());
    }
    let count = rd.u64()?;
    let layer_tag = rd.string()?;
    let table_len = rd.u16()? as usize;
    let mut table = Vec::with_capacity(table_len);
    for _ in 0..table_len {
        let name = rd.string()?;
        let g = Generator::parse(&name)
            .ok_or_else(|| AppError::Malformed(format!("unknown generator {name:?} in string table")))?;
        table.push(g);
    }
    // Each record needs at least its fixed-size fields and features.
    let min_record = 2 + 1 + 2 + 4 + 4 * dim;
    if (rd.remaining() / min_record) < count as usize {
        return Err(AppError::Truncated {
            offset: rd.offset(),
            needed: (count as usize).saturating_mul(min_record) - rd.remaining(),
        });
    }
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let image_id = rd.string()?;
        let authenticity = rd.u8()?;
        let index = rd.u16()?;
        let hint = rd.i32()?;
        let features = rd.f32s(dim)?;
        let generator = match (authenticity, index) {
            (0, NO_GENERATOR) => None,
            (1, i) if (i as usize) < table.len() => Some(table[i as usize]),
            _ => {
                return Err(AppError::Malformed(format!(
                    "record {image_id:?}: authenticity {authenticity} with generator index {index}"
                )))
            }
        };
        let class_hint = match hint {
            -1 => None,
            0..=999 => Some(hint as u16),
            _ => return Err(AppError::Malformed(format!("record {image_id:?}: class_hint {hint}"))),
        };
        records.push(PrototypeRecord {
            image_id,
            features,
            generator,
            class_hint,
        });
    }
    if rd.remaining() != 0 {
        return Err(AppError::Malformed(format!("{} trailing bytes", rd.remaining())));
    }
    Ok(FeatureSet::new(dim, layer_tag, records)?)
}

/// Writes `set` to `path` and returns the number of bytes written.
pub fn write_feature_file(set: &FeatureSet, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode(set)?;
    fs::write(path, &bytes).map_err(|e| AppError::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes)
}
