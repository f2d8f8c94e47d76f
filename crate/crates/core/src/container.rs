//! Versioned binary container shared by persisted data matrices and trained
//! scoring models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes
//! version      u32
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON
//! n_arrays     u32
//! repeated n_arrays times:
//!     len      u64
//!     values   len × f64 (IEEE-754, little-endian)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;
pub const DATA_MAGIC: &[u8; 8] = b"REDPCDM\0";
pub const MODEL_MAGIC: &[u8; 8] = b"REDPCSM\0";

pub fn write<W: Write>(
    mut w: W,
    magic: &[u8; 8],
    header: &serde_json::Value,
    arrays: &[&[f64]],
) -> Result<()> {
    let header = serde_json::to_vec(header).map_err(|e| Error::format("container header", e.to_string()))?;
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for arr in arrays {
        w.write_all(&(arr.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(arr.len() * 8);
        for v in arr.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read<R: Read>(mut r: R, magic: &[u8; 8]) -> Result<(serde_json::Value, Vec<Vec<f64>>)> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::format("container", "bad magic bytes"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(
            "container",
            format!("unsupported version {version} (expected {VERSION})"),
        ));
    }
    let hlen = read_u32(&mut r)? as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: serde_json::Value =
        serde_json::from_slice(&hbuf).map_err(|e| Error::format("container header", e.to_string()))?;
    let n = read_u32(&mut r)? as usize;
    let mut arrays = Vec::with_capacity(n);
    for _ in 0..n {
        let mut lb = [0u8; 8];
        r.read_exact(&mut lb)?;
        let len = u64::from_le_bytes(lb) as usize;
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        arrays.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        );
    }
    Ok((header, arrays))
}
