//! Binary descriptor cache.
//!
//! Layout (little-endian): 8-byte magic `JDRDLDSC`, `u32` version, `u64`
//! count, `u32` matrix dimension, `count` labels as `u32`, then `count`
//! matrices as row-major `f64`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;
use crate::write_atomic;

pub const CACHE_MAGIC: &[u8; 8] = b"JDRDLDSC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorCache {
    pub dim: usize,
    pub descriptors: Vec<SpdMatrix>,
    pub labels: Vec<usize>,
}

impl DescriptorCache {
    pub fn new(dim: usize, descriptors: Vec<SpdMatrix>, labels: Vec<usize>) -> Result<Self> {
        if descriptors.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} descriptors but {} labels",
                descriptors.len(),
                labels.len()
            )));
        }
        if let Some(d) = descriptors.iter().find(|d| d.dim() != dim) {
            return Err(Error::InvalidArgument(format!(
                "descriptor of dimension {} in a cache of dimension {dim}",
                d.dim()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > u32::MAX as usize) {
            return Err(Error::InvalidArgument(format!("label {l} does not fit the cache")));
        }
        Ok(DescriptorCache {
            dim,
            descriptors,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(24 + 4 * n + 8 * n * self.dim * self.dim);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        for d in &self.descriptors {
            let m = d.matrix();
            for i in 0..self.dim {
                for j in 0..self.dim {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a descriptor cache".into(),
            });
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let n = r.u64()? as usize;
        let dim = r.u32()? as usize;
        let need = n
            .checked_mul(4 + 8 * dim * dim)
            .and_then(|b| b.checked_add(r.pos))
            .ok_or_else(|| r.err("header sizes overflow"))?;
        if bytes.len() != need {
            return Err(r.err(format!(
                "expected {need} bytes for {n} descriptors of dimension {dim}, found {}",
                bytes.len()
            )));
        }
        let labels = (0..n).map(|_| r.u32().map(|l| l as usize)).collect::<Result<Vec<_>>>()?;
        let mut descriptors = Vec::with_capacity(n);
        for _ in 0..n {
            let start = r.pos;
            let mut vals = Vec::with_capacity(dim * dim);
            for _ in 0..dim * dim {
                vals.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
            }
            let m = DMatrix::from_row_slice(dim, dim, &vals);
            descriptors.push(SpdMatrix::new(m).map_err(|e| Error::Format {
                offset: start as u64,
                message: format!("invalid descriptor: {e}"),
            })?);
        }
        DescriptorCache::new(dim, descriptors, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
