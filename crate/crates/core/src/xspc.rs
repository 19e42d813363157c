//! XSPC v1 tensor files.
//!
//! Layout (all little-endian): magic `XSPC`, `u32` version = 1, `u32` rank,
//! `rank × u32` dims, then the row-major payload as IEEE-754 `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"XSPC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                format!("{expected} values for dims {dims:?}"),
                format!("{} values", data.len()),
            ));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Config(format!("dims {dims:?} exceed u32")));
        }
        Ok(Tensor { dims, data })
    }

    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            dims: vec![values.len()],
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Interprets a rank-1 tensor as a vector.
    pub fn into_vector(self) -> Result<Vec<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::shape("rank-1 tensor", format!("dims {:?}", self.dims)));
        }
        Ok(self.to_f64())
    }

    /// Interprets a rank-2 tensor as a matrix.
    pub fn into_matrix(self) -> Result<Matrix> {
        match self.dims[..] {
            [r, c] => Matrix::from_vec(r, c, self.to_f64()),
            _ => Err(Error::shape("rank-2 tensor", format!("dims {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: format!("bad magic {magic:?}, expected \"XSPC\""),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedFormat {
                field: "version".into(),
                detail: format!("XSPC version {version}, only {VERSION} is supported"),
            });
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Parse {
                offset: r.pos,
                detail: format!("dims {dims:?} overflow"),
            })?;
        let payload = r.take(
            count.checked_mul(4).ok_or_else(|| Error::Parse {
                offset: r.pos,
                detail: "payload size overflow".into(),
            })?,
            "payload",
        )?;
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.bytes.len(),
                detail: format!("truncated while reading {what} ({n} bytes at offset {})", self.pos),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_byte_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        let mut expected = b"XSPC".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(b, expected);
        assert_eq!(Tensor::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let good = Tensor::vector(&[1.0, 2.0, 3.0]).to_bytes();
        assert!(matches!(
            Tensor::from_bytes(&good[..good.len() - 1]),
            Err(Error::Parse { .. })
        ));
        let mut bad = good.clone();
        bad[0] = b'Y';
        assert!(matches!(Tensor::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(
            Tensor::from_bytes(&v2),
            Err(Error::UnsupportedFormat { .. })
        ));
        let mut extra = good;
        extra.push(0);
        assert!(Tensor::from_bytes(&extra).is_err());
    }

    #[test]
    fn rank_checks() {
        assert!(Tensor::vector(&[1.0]).into_matrix().is_err());
        let m = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert!(m.into_vector().is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0]).is_err());
    }
}
