//! Labeled vector datastore and its binary file format.
//!
//! On disk (little-endian): magic `DKNN`, version `u32`, dim `u32`,
//! count `u64`, keys as `f32` row-major, labels as `u32[count]`. `f32` is
//! the wire scalar; in-memory stores of other scalar types are converted on
//! write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STORE_MAGIC: [u8; 4] = *b"DKNN";
pub const STORE_VERSION: u32 = 1;

/// Ordered collection of d-dimensional keys with one `u32` label per key.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore<S> {
    dim: usize,
    keys: Vec<S>,
    labels: Vec<u32>,
}

impl<S: Scalar> VectorStore<S> {
    /// Empty store of the given dimensionality (`dim >= 2`).
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::BadShape(format!("dim must be >= 2, got {dim}")));
        }
        Ok(Self { dim, keys: Vec::new(), labels: Vec::new() })
    }

    /// Build from a flat row-major key matrix plus per-key labels.
    pub fn from_parts(dim: usize, keys: Vec<S>, labels: Vec<u32>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::BadShape(format!("dim must be >= 2, got {dim}")));
        }
        if keys.len() % dim != 0 {
            return Err(Error::BadShape(format!(
                "key buffer length {} not divisible by dim {dim}",
                keys.len()
            )));
        }
        let count = keys.len() / dim;
        if labels.len() != count {
            return Err(Error::LengthMismatch { left: count, right: labels.len() });
        }
        if keys.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadShape("non-finite key coordinate".into()));
        }
        Ok(Self { dim, keys, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn key(&self, i: usize) -> &[S] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Flat row-major key matrix.
    pub fn keys_flat(&self) -> &[S] {
        &self.keys
    }

    pub fn iter_keys(&self) -> impl Iterator<Item = &[S]> {
        self.keys.chunks_exact(self.dim)
    }

    pub fn push(&mut self, key: &[S], label: u32) -> Result<()> {
        if key.len() != self.dim {
            return Err(Error::SizeMismatch { left: key.len(), right: self.dim });
        }
        self.keys.extend_from_slice(key);
        self.labels.push(label);
        Ok(())
    }

    /// Convert the scalar type (through `f64`).
    pub fn cast<T: Scalar>(&self) -> VectorStore<T> {
        VectorStore {
            dim: self.dim,
            keys: crate::scalar::cast_slice(&self.keys),
            labels: self.labels.clone(),
        }
    }

    /// Write in the `DKNN` format, converting keys to `f32`.
    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for &x in &self.keys {
            w.write_all(&(x.widen() as f32).to_le_bytes())?;
        }
        for &l in &self.labels {
            w.write_all(&l.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

impl VectorStore<f32> {
    /// Read a `DKNN` file.
    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != STORE_MAGIC {
            return Err(Error::Format("bad store magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!("unsupported store version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let keys = read_f32_vec(&mut r, count * dim)?;
        let labels = read_u32_vec(&mut r, count)?;
        Self::from_parts(dim, keys, labels)
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32_vec(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub(crate) fn read_u32_vec(r: &mut impl Read, n: usize) -> Result<Vec<u32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub(crate) fn read_u64_vec(r: &mut impl Read, n: usize) -> Result<Vec<u64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect())
}
