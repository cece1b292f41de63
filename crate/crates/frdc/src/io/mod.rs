//! Binary file formats: raw video (`FVID`), motion-vector labels (`MVL1`),
//! and parameter checkpoints (`FCKP`). All multi-byte integers are
//! little-endian.

mod fckp;
mod fvid;
mod mvl;

pub use fckp::{checkpoint_digest, read_checkpoint_entries, write_checkpoint_entries};
pub use fvid::{frame_from_bytes, frame_to_bytes, read_fvid, write_fvid};
pub use mvl::{read_mvl, write_mvl};

use crate::error::{Error, Result};

pub(crate) fn expect_magic(buf: &[u8], pos: &mut usize, expected: &[u8; 4]) -> Result<()> {
    let got = take(buf, pos, 4)?;
    if got != expected {
        return Err(Error::BadMagic {
            expected: *expected,
            got: [got[0], got[1], got[2], got[3]],
        });
    }
    Ok(())
}

pub(crate) fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *pos + n > buf.len() {
        return Err(Error::CorruptFile {
            what: "binary stream",
            detail: format!("unexpected end at byte {} ({n} more needed)", *pos),
        });
    }
    let s = &buf[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

pub(crate) fn read_u16(buf: &[u8], pos: &mut usize) -> Result<u16> {
    let s = take(buf, pos, 2)?;
    Ok(u16::from_le_bytes([s[0], s[1]]))
}

pub(crate) fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    let s = take(buf, pos, 4)?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

pub(crate) fn read_f64(buf: &[u8], pos: &mut usize) -> Result<f64> {
    let s = take(buf, pos, 8)?;
    Ok(f64::from_le_bytes(s.try_into().expect("8 bytes")))
}
