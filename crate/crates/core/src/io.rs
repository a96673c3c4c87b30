//! Binary containers shared by checkpoints and sample archives.
//!
//! ```text
//! magic        8 bytes
//! version      u32 LE
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON
//! payload      f32 LE values to end of file
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;

pub fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(20 + header.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for &v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(what: &'static str, magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(Error::format(what, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::format(what, format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let end = 20usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format(what, "header runs past end of file"))?;
    let header = serde_json::from_slice(&bytes[20..end])?;
    let rest = &bytes[end..];
    if rest.len() % 4 != 0 {
        return Err(Error::format(what, "payload is not a whole number of f32 values"));
    }
    let payload = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header, payload))
}

pub fn write<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(magic, header, payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read<H: DeserializeOwned>(path: &Path, what: &'static str, magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(what, magic, &bytes)
}

/// Rounds through `f32`, the precision stored on disk.
pub fn quantize(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v as f32 as f64).collect()
}
