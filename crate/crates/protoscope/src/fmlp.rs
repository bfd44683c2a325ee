//! FMLP model checkpoints, framed like FPRO.
//!
//! ```text
//! magic "FMLP" | version u16 = 1 | input_dim u32
//! hidden: u16 count, then u32 width per layer
//! head u8 (0 sigmoid, 1 softmax) | classes u16 | seed u64
//! per layer: out x in f32 weights (row-major), then out f32 biases
//! ```

use std::fs;
use std::path::Path;

use protoscope_core::neural::{LayerParams, Mlp, MlpArchitecture, OutputHead};

use crate::binio::{put_f32s, Reader};
use crate::error::{AppError, Result};

pub const MAGIC: [u8; 4] = *b"FMLP";
pub const VERSION: u16 = 1;

pub fn encode(model: &Mlp<f32>) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(32 + 4 * model.parameter_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(arch.hidden.len() as u16).to_le_bytes());
    for &h in &arch.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    let (head, classes) = match arch.output {
        OutputHead::Sigmoid => (0u8, 2u16),
        OutputHead::Softmax(n) => (1u8, n as u16),
    };
    out.push(head);
    out.extend_from_slice(&classes.to_le_bytes());
    out.extend_from_slice(&model.seed().to_le_bytes());
    for layer in model.layers() {
        put_f32s(&mut out, &layer.weights);
        put_f32s(&mut out, &layer.bias);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Mlp<f32>> {
    let mut rd = Reader::new(bytes);
    let magic = rd.array::<4>()?;
    if magic != MAGIC {
        return Err(AppError::BadMagic {
            expected: "FMLP",
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
    let input_dim = rd.u32()? as usize;
    let depth = rd.u16()? as usize;
    let hidden = (0..depth).map(|_| rd.u32().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
    let head = match (rd.u8()?, rd.u16()?) {
        (0, 2) => OutputHead::Sigmoid,
        (1, n) => OutputHead::Softmax(n as usize),
        (h, n) => return Err(AppError::Malformed(format!("output head {h} with {n} classes"))),
    };
    let seed = rd.u64()?;
    let arch = MlpArchitecture::new(input_dim, &hidden, head)?;
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(inputs, outputs)| {
            Ok(LayerParams {
                inputs,
                outputs,
                weights: rd.f32s(inputs * outputs)?,
                bias: rd.f32s(outputs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rd.remaining() != 0 {
        return Err(AppError::Malformed(format!("{} trailing bytes", rd.remaining())));
    }
    if layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
        return Err(AppError::Malformed("non-finite model parameter".into()));
    }
    Ok(Mlp::from_layers(arch, layers, seed)?)
}

pub fn write_model_file(model: &Mlp<f32>, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode(model);
    fs::write(path, &bytes).map_err(|e| AppError::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<Mlp<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes)
}
