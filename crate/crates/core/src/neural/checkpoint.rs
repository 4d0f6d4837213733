//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! u8   version (1)
//! u8   scalar width in bytes (4 or 8)
//! u32  tensor count
//! per tensor:
//!   u32  name length, then UTF-8 name bytes
//!   u32  rank, then rank x u64 dimensions
//!   prod(dims) scalars
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u8 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ParameterSet<T>, mut out: W) -> Result<()> {
    out.write_all(&[CHECKPOINT_VERSION, T::WIDTH])?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for t in params.tensors() {
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            out.write_all(&v.to_le_vec())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<ParameterSet<T>> {
    let [version, width] = read_array::<2, _>(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if width != T::WIDTH {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {width}-byte scalars, expected {}",
            T::WIDTH
        )));
    }
    let count = u32::from_le_bytes(read_array(&mut input)?);
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let mut name = vec![0u8; name_len];
        input
            .read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = u32::from_le_bytes(read_array(&mut input)?);
        let shape = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(read_array(&mut input)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; len * usize::from(width)];
        input
            .read_exact(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("truncated data for {name}: {e}")))?;
        let data = bytes.chunks_exact(usize::from(width)).map(T::from_le_slice).collect();
        tensors.push(Tensor { name, shape, data });
    }
    Ok(ParameterSet::new(tensors))
}

/// Writes to `path` through a temporary file and rename.
pub fn save_checkpoint<T: Scalar>(params: &ParameterSet<T>, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(params, &mut bytes)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParameterSet<T>> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}
