//! Parameter checkpoint file.
//!
//! Layout: magic "FCKP", u32 entry count, then per entry: u32 name length +
//! UTF-8 name, u8 rank, rank u32 extents, and the values as little-endian
//! f64. The SHA-256 of the serialized bytes identifies the checkpoint in
//! bitstream headers.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grad::Array;
use crate::io::{expect_magic, read_f64, read_u32, take};

const MAGIC: &[u8; 4] = b"FCKP";

pub(crate) fn entries_to_bytes(entries: &[(String, &Array)]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, arr) in entries {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(arr.shape().len() as u8);
        for &e in arr.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in arr.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn checkpoint_digest(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

/// Serialize named parameter entries; returns the checkpoint digest.
pub fn write_checkpoint_entries(path: &Path, entries: &[(String, &Array)]) -> Result<[u8; 32]> {
    let bytes = entries_to_bytes(entries);
    let digest = checkpoint_digest(&bytes);
    std::fs::write(path, bytes)?;
    Ok(digest)
}

/// Parse a checkpoint into its named entries plus the file digest.
pub fn read_checkpoint_entries(path: &Path) -> Result<(Vec<(String, Array)>, [u8; 32])> {
    let buf = std::fs::read(path)?;
    let digest = checkpoint_digest(&buf);
    let mut pos = 0usize;
    expect_magic(&buf, &mut pos, MAGIC)?;
    let count = read_u32(&buf, &mut pos)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&buf, &mut pos)? as usize;
        let name = String::from_utf8(take(&buf, &mut pos, name_len)?.to_vec()).map_err(|e| {
            Error::CorruptFile {
                what: "FCKP entry name",
                detail: e.to_string(),
            }
        })?;
        let rank = take(&buf, &mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&buf, &mut pos)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(read_f64(&buf, &mut pos)?);
        }
        entries.push((name, Array::from_vec(&shape, data)?));
    }
    Ok((entries, digest))
}
