//! Versioned binary parameter container: magic "AFG1", an embedded JSON
//! metadata block, then named tensors with little-endian shapes and
//! float64 payloads.

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AFG1";

pub fn save_checkpoint(
    path: &Path,
    tensors: &[(String, Tensor)],
    metadata: &serde_json::Value,
) -> Result<()> {
    let meta = serde_json::to_vec(metadata)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &dim in tensor.shape() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Vec<(String, Tensor)>, serde_json::Value)> {
    let bytes = fs::read(path)?;
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };

    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes, not an AFG1 container".into()));
    }
    let meta_len = cursor.u32()? as usize;
    let metadata: serde_json::Value = serde_json::from_slice(cursor.take(meta_len)?)?;

    let n_tensors = cursor.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = cursor.u32()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = cursor.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cursor.u64()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(cursor.f64()?);
        }
        tensors.push((name, Tensor::new(shape, data)?));
    }
    Ok((tensors, metadata))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated container".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
