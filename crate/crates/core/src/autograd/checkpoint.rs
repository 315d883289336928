//! Binary named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "TSPNCKPT"
//! version  u32      1
//! count    u32
//! count x {
//!   name_len u32, name (UTF-8), rows u32, cols u32, trainable u8,
//!   rows * cols f64 values
//! }
//! ```

use std::fs;
use std::path::Path;

use crate::autograd::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TSPNCKPT";
const VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().0 as u32).to_le_bytes());
        out.extend_from_slice(&(t.shape().1 as u32).to_le_bytes());
        out.push(t.requires_grad() as u8);
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ParamSet, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| format!("tensor name: {e}"))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let trainable = r.take(1)?[0] != 0;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| format!("{name}: shape overflow"))?;
        let raw = r.take(n.checked_mul(8).ok_or("size overflow")?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut t = Tensor::new((rows, cols), values).map_err(|e| e.to_string())?;
        if trainable {
            t = t.trainable();
        }
        params.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and checks it holds exactly the `expected` tensors.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: &[(String, (usize, usize))],
) -> Result<ParamSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let params = decode(&bytes).map_err(fail)?;
    for (name, shape) in expected {
        match params.get(name) {
            None => return Err(fail(format!("missing tensor {name}"))),
            Some(t) if t.shape() != *shape => {
                return Err(fail(format!(
                    "tensor {name} has shape {:?}, configuration expects {shape:?}",
                    t.shape()
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = params.names().find(|n| expected.iter().all(|(e, _)| e != n)) {
        return Err(fail(format!("unexpected tensor {extra}")));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("W", Tensor::new((2, 3), vec![1.0, -2.5, 3.0, 0.1, f64::MIN_POSITIVE, 7.0]).unwrap().trainable());
        p.insert("b", Tensor::row(vec![0.25]));
        p
    }

    fn shapes() -> Vec<(String, (usize, usize))> {
        vec![("W".into(), (2, 3)), ("b".into(), (1, 1))]
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        assert_eq!(load_checkpoint(&path, &shapes()).unwrap(), sample());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let mut wrong = shapes();
        wrong[0].1 = (3, 2);
        assert!(load_checkpoint(&path, &wrong).is_err());
        assert!(load_checkpoint(&path, &shapes()[..1]).is_err());
    }

    #[test]
    fn corrupt_bytes_are_rejected() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
