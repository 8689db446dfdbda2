//! NVOL volume files.
//!
//! Little-endian: `"NVOL"`, u16 version (1), u8 dtype (1 = f32), u8 rank,
//! rank × u32 extents, then the voxels in tensor layout (x fastest).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{element_count, Tensor, MAX_RANK};

pub const NVOL_MAGIC: [u8; 4] = *b"NVOL";
pub const NVOL_VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

pub fn encode_volume(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&NVOL_MAGIC);
    out.extend_from_slice(&NVOL_VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Tensor<f32>> {
    let truncated = |what: &str| Error::Truncated(format!("NVOL {what}"));
    if bytes.len() < 4 {
        return Err(truncated("magic"));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != NVOL_MAGIC {
        return Err(Error::BadMagic {
            expected: NVOL_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < 8 {
        return Err(truncated("header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != NVOL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: NVOL_VERSION,
        });
    }
    if bytes[6] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported NVOL dtype code {}", bytes[6])));
    }
    let rank = bytes[7] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("NVOL rank {rank} outside 1..={MAX_RANK}")));
    }
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated("extents"));
    }
    let shape: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let n = element_count(&shape)?;
    let payload = n.checked_mul(4).ok_or_else(|| Error::InvalidShape {
        shape: shape.clone(),
        reason: "payload size overflows".into(),
    })?;
    let body = &bytes[header..];
    if body.len() < payload {
        return Err(Error::Truncated(format!(
            "NVOL payload: expected {payload} bytes, found {}",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!("{} trailing bytes after NVOL payload", body.len() - payload)));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::from_vec(&shape, data)
}

pub fn save_volume(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(t)).map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}
