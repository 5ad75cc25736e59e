//! Model file format (little-endian throughout):
//!
//! ```text
//! "ICNN"                 magic
//! u32                    format version
//! u8                     activation (0 tanh, 1 relu, 2 lrelu, 3 prelu)
//! f64                    leaky slope (0 unless lrelu)
//! u32 u32 u32            input frames, mel bins, output classes
//! u64                    initialisation seed
//! u32                    parameter count
//! per parameter:
//!   u32                  rank
//!   u32 × rank           dims
//!   f32 × product(dims)  values
//! u32                    CRC-32 of every preceding byte
//! ```
//!
//! Optimizer moments are not stored.

use std::fs;
use std::path::Path;

use super::{ArchitectureSpec, Model, ModelError, MEL_BINS};
use crate::tensor::{ActivationKind, Parameter, Tensor};
use crate::NUM_CLASSES;

pub const MODEL_MAGIC: &[u8; 4] = b"ICNN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn write_model(model: &Model) -> Vec<u8> {
    let mut buf = Vec::with_capacity(model.spec.parameter_count() * 4 + 256);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    let (tag, alpha) = match model.spec.activation {
        ActivationKind::Tanh => (0u8, 0.0),
        ActivationKind::Relu => (1, 0.0),
        ActivationKind::LeakyRelu { alpha } => (2, alpha),
        ActivationKind::PRelu => (3, 0.0),
    };
    buf.push(tag);
    buf.extend_from_slice(&alpha.to_le_bytes());
    for v in [model.spec.input_frames, MEL_BINS, NUM_CLASSES] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&model.rng_seed.to_le_bytes());
    buf.extend_from_slice(&(model.parameters.len() as u32).to_le_bytes());
    for p in &model.parameters {
        buf.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.values() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).ok_or(ModelError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(ModelError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_model(bytes: &[u8]) -> Result<Model, ModelError> {
    if bytes.len() < 8 {
        return Err(ModelError::Truncated);
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(ModelError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);

    let mut r = Reader { bytes: body, pos: 8 };
    let parsed = parse_body(&mut r);
    if stored != computed {
        // A short body is reported as truncation rather than corruption.
        return match parsed {
            Err(ModelError::Truncated) => Err(ModelError::Truncated),
            _ => Err(ModelError::Checksum { stored, computed }),
        };
    }
    let model = parsed?;
    if r.pos != body.len() {
        return Err(ModelError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

fn parse_body(r: &mut Reader<'_>) -> Result<Model, ModelError> {
    let tag = r.u8()?;
    let alpha = r.f64()?;
    let activation = match tag {
        0 => ActivationKind::Tanh,
        1 => ActivationKind::Relu,
        2 => ActivationKind::leaky(alpha)?,
        3 => ActivationKind::PRelu,
        t => return Err(ModelError::Malformed(format!("activation tag {t}"))),
    };
    let input_frames = r.u32()? as usize;
    let bins = r.u32()? as usize;
    let classes = r.u32()? as usize;
    if bins != MEL_BINS || classes != NUM_CLASSES {
        return Err(ModelError::Malformed(format!("{bins} mel bins / {classes} classes")));
    }
    let rng_seed = r.u64()?;
    let spec = ArchitectureSpec::new(activation, input_frames)?;
    let expected = spec.parameter_shapes();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(ModelError::Malformed(format!(
            "{count} parameters, architecture has {}",
            expected.len()
        )));
    }
    let mut parameters = Vec::with_capacity(count);
    for want in &expected {
        let rank = r.u32()? as usize;
        if rank > 4 {
            return Err(ModelError::Malformed(format!("rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if &shape != want {
            return Err(ModelError::Malformed(format!("parameter shape {shape:?}, expected {want:?}")));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        parameters.push(Parameter::new(Tensor::from_vec(&shape, values)?));
    }
    Ok(Model {
        spec,
        parameters,
        rng_seed,
    })
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    read_model(&fs::read(path)?)
}
