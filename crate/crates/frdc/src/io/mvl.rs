//! Block motion-vector label file.
//!
//! Layout: magic "MVL1", u32 frame width, u32 frame height, u16 grid
//! stride, u16 precision denominator, u32 metadata length + UTF-8 bytes,
//! then grid cells row-major as signed 16-bit (v_i, v_j) pairs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{expect_magic, read_u16, read_u32, take};
use crate::motion::MvLabelGrid;

const MAGIC: &[u8; 4] = b"MVL1";

pub fn write_mvl(path: &Path, grid: &MvLabelGrid) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(grid.frame_width as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.frame_height as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.stride as u16).to_le_bytes());
    buf.extend_from_slice(&(grid.precision as u16).to_le_bytes());
    let meta = grid.metadata.as_bytes();
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta);
    for &(vi, vj) in grid.cells() {
        buf.extend_from_slice(&vi.to_le_bytes());
        buf.extend_from_slice(&vj.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_mvl(path: &Path) -> Result<MvLabelGrid> {
    let buf = std::fs::read(path)?;
    let mut pos = 0usize;
    expect_magic(&buf, &mut pos, MAGIC)?;
    let w = read_u32(&buf, &mut pos)? as usize;
    let h = read_u32(&buf, &mut pos)? as usize;
    let s = read_u16(&buf, &mut pos)? as usize;
    let p = read_u16(&buf, &mut pos)? as usize;
    let meta_len = read_u32(&buf, &mut pos)? as usize;
    let meta = String::from_utf8(take(&buf, &mut pos, meta_len)?.to_vec()).map_err(|e| {
        Error::CorruptFile {
            what: "MVL metadata",
            detail: e.to_string(),
        }
    })?;
    if s == 0 {
        return Err(Error::CorruptFile {
            what: "MVL header",
            detail: "zero stride".into(),
        });
    }
    let count = w.div_ceil(s) * h.div_ceil(s);
    let mut cells = Vec::with_capacity(count);
    for _ in 0..count {
        let b = take(&buf, &mut pos, 4)?;
        cells.push((
            i16::from_le_bytes([b[0], b[1]]),
            i16::from_le_bytes([b[2], b[3]]),
        ));
    }
    MvLabelGrid::new(w, h, s, p, meta, cells)
}
