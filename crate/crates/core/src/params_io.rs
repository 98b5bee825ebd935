//! Binary parameter files.
//!
//! Layout (little-endian): `b"LMSX"`, u32 version, u32 tensor count, then per
//! tensor a u32 rank and that many u32 dims, then all tensor data as f64 in
//! the same order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

pub const PARAMS_MAGIC: &[u8; 4] = b"LMSX";
pub const PARAMS_VERSION: u32 = 1;

pub fn encode(tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::BadParamsFile(format!(
                "truncated at byte {}: need {n}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != PARAMS_MAGIC {
        return Err(Error::BadParamsFile("bad magic".into()));
    }
    let version = c.u32()?;
    if version != PARAMS_VERSION {
        return Err(Error::BadParamsFile(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| Error::BadParamsFile("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::BadParamsFile(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(tensors)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let tensors: Vec<&Tensor> = model.tensors().into_iter().map(|(_, t)| t).collect();
    fs::write(path, encode(&tensors)).map_err(|e| Error::io(path, e))
}

/// Load parameters into a model built from the matching architecture.
pub fn load_model_params(model: &mut Model, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model.load_tensors(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::from_vec(&[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let b = Tensor::from_vec(&[3], vec![1.0 / 3.0, 2.0, -7.5]).unwrap();
        let back = decode(&encode(&[&a, &b])).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in back.iter().zip([&a, &b]) {
            assert_eq!(x.shape(), y.shape());
            let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn header_layout() {
        let t = Tensor::zeros(&[1, 2]);
        let bytes = encode(&[&t]);
        assert_eq!(&bytes[..4], b"LMSX");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 16);
    }

    #[test]
    fn corrupt_files_rejected() {
        let t = Tensor::zeros(&[2]);
        let bytes = encode(&[&t]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadParamsFile(_))));
    }

    #[test]
    fn model_save_load() {
        let spec = NetworkSpec::new(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Prelu { channels: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 32, outputs: 3 },
            ],
        )
        .unwrap();
        let a = Model::init(spec.clone(), 5, 1).unwrap();
        let mut b = Model::init(spec, 5, 2).unwrap();
        assert_ne!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_model(&a, &path).unwrap();
        load_model_params(&mut b, &path).unwrap();
        assert_eq!(a, b);
    }
}
