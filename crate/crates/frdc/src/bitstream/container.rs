//! Coded-sequence container.
//!
//! Layout (all little-endian): magic "FRDC", u16 version, u32 width, u32
//! height, u16 channels, u32 intra period, u32 frame count, f64 lambda,
//! 32-byte checkpoint digest, then per frame: u8 kind (0 intra / 1 inter);
//! intra: u32 length + raw 8-bit planes; inter: u32 lengths for the
//! (z, y, g) streams + the three payloads.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{expect_magic, read_f64, read_u16, read_u32, take};

const MAGIC: &[u8; 4] = b"FRDC";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum FrameRecord {
    Intra { planes: Vec<u8> },
    Inter { z: Vec<u8>, y: Vec<u8>, g: Vec<u8> },
}

impl FrameRecord {
    /// Total payload size in bits (the per-frame coded cost).
    pub fn payload_bits(&self) -> u64 {
        8 * match self {
            FrameRecord::Intra { planes } => planes.len() as u64,
            FrameRecord::Inter { z, y, g } => (z.len() + y.len() + g.len()) as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub width: u32,
    pub height: u32,
    pub channels: u16,
    pub intra_period: u32,
    pub lambda: f64,
    pub checkpoint_digest: [u8; 32],
    pub frames: Vec<FrameRecord>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        buf.extend_from_slice(&self.channels.to_le_bytes());
        buf.extend_from_slice(&self.intra_period.to_le_bytes());
        buf.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.lambda.to_le_bytes());
        buf.extend_from_slice(&self.checkpoint_digest);
        for f in &self.frames {
            match f {
                FrameRecord::Intra { planes } => {
                    buf.push(0);
                    buf.extend_from_slice(&(planes.len() as u32).to_le_bytes());
                    buf.extend_from_slice(planes);
                }
                FrameRecord::Inter { z, y, g } => {
                    buf.push(1);
                    buf.extend_from_slice(&(z.len() as u32).to_le_bytes());
                    buf.extend_from_slice(&(y.len() as u32).to_le_bytes());
                    buf.extend_from_slice(&(g.len() as u32).to_le_bytes());
                    buf.extend_from_slice(z);
                    buf.extend_from_slice(y);
                    buf.extend_from_slice(g);
                }
            }
        }
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Container> {
        let mut pos = 0usize;
        expect_magic(buf, &mut pos, MAGIC)?;
        let version = read_u16(buf, &mut pos)?;
        if version != VERSION {
            return Err(Error::BadVersion {
                expected: VERSION,
                got: version,
            });
        }
        let width = read_u32(buf, &mut pos)?;
        let height = read_u32(buf, &mut pos)?;
        let channels = read_u16(buf, &mut pos)?;
        let intra_period = read_u32(buf, &mut pos)?;
        let frame_count = read_u32(buf, &mut pos)? as usize;
        let lambda = read_f64(buf, &mut pos)?;
        let digest: [u8; 32] = take(buf, &mut pos, 32)?.try_into().expect("32 bytes");
        let mut frames = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            let kind = take(buf, &mut pos, 1)?[0];
            match kind {
                0 => {
                    let len = read_u32(buf, &mut pos)? as usize;
                    frames.push(FrameRecord::Intra {
                        planes: take(buf, &mut pos, len)?.to_vec(),
                    });
                }
                1 => {
                    let lz = read_u32(buf, &mut pos)? as usize;
                    let ly = read_u32(buf, &mut pos)? as usize;
                    let lg = read_u32(buf, &mut pos)? as usize;
                    frames.push(FrameRecord::Inter {
                        z: take(buf, &mut pos, lz)?.to_vec(),
                        y: take(buf, &mut pos, ly)?.to_vec(),
                        g: take(buf, &mut pos, lg)?.to_vec(),
                    });
                }
                k => {
                    return Err(Error::CorruptFile {
                        what: "FRDC frame record",
                        detail: format!("unknown frame kind {k}"),
                    })
                }
            }
        }
        if pos != buf.len() {
            return Err(Error::CorruptFile {
                what: "FRDC container",
                detail: format!("{} trailing bytes", buf.len() - pos),
            });
        }
        Ok(Container {
            width,
            height,
            channels,
            intra_period,
            lambda,
            checkpoint_digest: digest,
            frames,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Container> {
        Container::from_bytes(&std::fs::read(path)?)
    }
}
