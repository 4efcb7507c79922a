//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "PSDCKPT\0"
//! version  u32
//! config   u32 length + UTF-8 JSON of ModelConfig
//! count    u32
//! tensor*  u32 name length + name, u32 ndim, u32 dims[ndim], f32 data[product(dims)]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{Classifier, ModelConfig};
use super::NnError;

const MAGIC: &[u8; 8] = b"PSDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn get_bytes<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<u8>, NnError> {
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(NnError::Checkpoint(format!("truncated {what}")));
    }
    Ok(buf)
}

fn len_u32(n: usize) -> Result<u32, NnError> {
    u32::try_from(n).map_err(|_| NnError::Checkpoint(format!("length {n} exceeds u32")))
}

pub fn write_checkpoint<W: Write>(model: &Classifier, mut w: W) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    let config = serde_json::to_vec(&model.config).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    put_u32(&mut w, len_u32(config.len())?)?;
    w.write_all(&config)?;
    let tensors = model.tensors();
    put_u32(&mut w, len_u32(tensors.len())?)?;
    for (name, dims, data) in tensors {
        put_u32(&mut w, len_u32(name.len())?)?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, len_u32(dims.len())?)?;
        for d in dims {
            put_u32(&mut w, len_u32(d)?)?;
        }
        for &v in data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint; tensor names, order and shapes must match what the
/// stored config implies.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Classifier, NnError> {
    let magic = get_bytes(&mut r, MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(NnError::Checkpoint("not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = get_u32(&mut r)? as usize;
    let config: ModelConfig = serde_json::from_slice(&get_bytes(&mut r, len, "config")?)
        .map_err(|e| NnError::Checkpoint(format!("config: {e}")))?;
    let mut model = Classifier::zeros(config)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .tensors()
        .into_iter()
        .map(|(name, dims, _)| (name, dims))
        .collect();
    let count = get_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(NnError::Checkpoint(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    for ((name, dims), slot) in expected.iter().zip(model.slices_mut()) {
        let len = get_u32(&mut r)? as usize;
        let found = get_bytes(&mut r, len, "tensor name")?;
        if found != name.as_bytes() {
            return Err(NnError::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(&found)
            )));
        }
        let ndim = get_u32(&mut r)? as usize;
        let found_dims = (0..ndim)
            .map(|_| get_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &found_dims != dims {
            return Err(NnError::Checkpoint(format!(
                "tensor {name}: shape {found_dims:?}, expected {dims:?}"
            )));
        }
        let bytes = get_bytes(&mut r, slot.len() * 4, "tensor data")?;
        for (v, chunk) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
            let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !x.is_finite() {
                return Err(NnError::Checkpoint(format!("tensor {name} has a non-finite value")));
            }
            *v = x as f64;
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Classifier, path: &Path) -> Result<(), NnError> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier, NnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig {
            vocab_size: 4,
            embed_dim: 3,
            hidden_dim: 2,
            dense_dim: 2,
            dropout: 0.5,
            bidirectional: true,
            max_len: 5,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let model = Classifier::new(config(), 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let model = Classifier::new(config(), 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(bad_magic.as_slice()).is_err());
        let mut bad_version = buf;
        bad_version[8] = 9;
        assert!(read_checkpoint(bad_version.as_slice()).is_err());
    }
}
