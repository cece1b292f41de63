//! Raw planar 8-bit video container.
//!
//! Layout: magic "FVID", u32 width, u32 height, u16 channels, u32 frame
//! count, then per frame `channels` planes of `height*width` bytes.
//! Samples normalize to [0,1] on load; values are clamped to [0,1] only
//! here, at file output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Array;
use crate::io::{expect_magic, read_u16, read_u32, take};
use crate::motion::Frame;

const MAGIC: &[u8; 4] = b"FVID";

/// Quantize one frame to its stored 8-bit planes.
pub fn frame_to_bytes(frame: &Frame) -> Vec<u8> {
    frame
        .array()
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn frame_from_bytes(c: usize, h: usize, w: usize, bytes: &[u8]) -> Result<Frame> {
    if bytes.len() != c * h * w {
        return Err(Error::shape("FVID frame payload", &[c * h * w], &[bytes.len()]));
    }
    let data = Array::from_vec(&[c, h, w], bytes.iter().map(|&b| b as f64 / 255.0).collect())?;
    Frame::from_array(data)
}

pub fn write_fvid(path: &Path, frames: &[Frame]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Invalid("write_fvid: no frames".into()));
    }
    let (c, h, w) = (frames[0].channels(), frames[0].height(), frames[0].width());
    let mut buf = Vec::with_capacity(18 + frames.len() * c * h * w);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(c as u16).to_le_bytes());
    buf.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        if (f.channels(), f.height(), f.width()) != (c, h, w) {
            return Err(Error::shape(
                "write_fvid frame extents",
                &[c, h, w],
                &[f.channels(), f.height(), f.width()],
            ));
        }
        buf.extend_from_slice(&frame_to_bytes(f));
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_fvid(path: &Path) -> Result<Vec<Frame>> {
    let buf = std::fs::read(path)?;
    let mut pos = 0usize;
    expect_magic(&buf, &mut pos, MAGIC)?;
    let w = read_u32(&buf, &mut pos)? as usize;
    let h = read_u32(&buf, &mut pos)? as usize;
    let c = read_u16(&buf, &mut pos)? as usize;
    let n = read_u32(&buf, &mut pos)? as usize;
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::CorruptFile {
            what: "FVID header",
            detail: format!("degenerate extents {c}x{h}x{w}"),
        });
    }
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let bytes = take(&buf, &mut pos, c * h * w)?;
        frames.push(frame_from_bytes(c, h, w, bytes)?);
    }
    Ok(frames)
}
