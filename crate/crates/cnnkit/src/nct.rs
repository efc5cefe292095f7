//! ".nct" raw tensors: `NCT1`, u32 LE rank, rank u32 LE extents, then f32 LE
//! values in row-major order.

use std::fs;
use std::path::Path;

use cnnkit_core::Tensor;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 4] = b"NCT1";

pub fn encode(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, "missing NCT1 magic"));
    }
    let rank = read_u32(bytes, 4).ok_or_else(|| Error::format(path, "truncated header"))? as usize;
    if rank > 8 {
        return Err(Error::format(path, format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let d =
            read_u32(bytes, 8 + 4 * i).ok_or_else(|| Error::format(path, "truncated header"))?;
        shape.push(d as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(path, format!("extents {shape:?} overflow")))?;
    let start = 8 + 4 * rank;
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() != 4 * count {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} bytes, shape {shape:?} needs {}",
                payload.len(),
                4 * count
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::from_vec(&shape, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read(path: &Path) -> Result<Tensor<f32>> {
    decode(&fs::read(path).map_err(Error::io(path))?, path)
}

pub fn write(path: &Path, t: &Tensor<f32>) -> Result<()> {
    write_atomic(path, &encode(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let t = Tensor::from_vec(&[3, 1, 2], vec![0.0, 0.5, 1.0, -2.0, 1e-7, 3.25]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"NCT1");
        assert_eq!(decode(&bytes, Path::new("x.nct")).unwrap(), t);
        assert!(decode(&bytes[..bytes.len() - 1], Path::new("x.nct")).is_err());
        assert!(decode(b"NCT2", Path::new("x.nct")).is_err());
    }
}
