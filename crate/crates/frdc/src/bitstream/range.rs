//! Carry-less range coder, 16-bit probability precision.
//!
//! Subbotin-style: 32-bit low/range, byte renormalization, and a range
//! clamp to the next 2^16 boundary when the interval straddles a top-byte
//! carry. The flush emits only the two bytes that pin a 2^16-aligned value
//! inside the final interval; the decoder zero-pads past the stream end.

use crate::bitstream::CdfTable;
use crate::error::{Error, Result};

const TOP: u64 = 1 << 24;
const BOT: u64 = 1 << 16;

pub(crate) struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub(crate) fn new() -> RangeEncoder {
        RangeEncoder {
            low: 0,
            range: 0xFFFF_FFFF,
            out: Vec::new(),
        }
    }

    pub(crate) fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum as u64 + freq as u64 <= BOT);
        let r = self.range >> 16;
        self.low += r * cum as u64;
        self.range = r * freq as u64;
        self.normalize();
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ (self.low + self.range)) < TOP {
                // top byte settled
            } else if self.range < BOT {
                // straddling interval: clamp to the next 2^16 boundary
                self.range = BOT - (self.low & (BOT - 1));
            } else {
                break;
            }
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
    }

    /// Emit the two bytes selecting a 2^16-aligned value in [low, low+range).
    pub(crate) fn finish(mut self) -> Vec<u8> {
        let aligned = (self.low + BOT - 1) & !(BOT - 1);
        debug_assert!(aligned >= self.low && aligned < self.low + self.range);
        self.out.push((aligned >> 24) as u8);
        self.out.push((aligned >> 16) as u8);
        self.out
    }
}

pub(crate) struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    input: &'a [u8],
    pos: usize,
    padded: usize,
}

/// Reads past the flush are zero padding; more than this is truncation.
const MAX_PAD: usize = 4;

impl<'a> RangeDecoder<'a> {
    pub(crate) fn new(input: &'a [u8]) -> Result<RangeDecoder<'a>> {
        let mut d = RangeDecoder {
            low: 0,
            range: 0xFFFF_FFFF,
            code: 0,
            input,
            pos: 0,
            padded: 0,
        };
        for _ in 0..4 {
            let b = d.next_byte()?;
            d.code = (d.code << 8) | b as u64;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        if self.pos < self.input.len() {
            self.pos += 1;
            Ok(self.input[self.pos - 1])
        } else {
            self.padded += 1;
            if self.padded > MAX_PAD {
                return Err(Error::TruncatedStream { position: self.pos });
            }
            Ok(0)
        }
    }

    pub(crate) fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        let r = self.range >> 16;
        let target = ((self.code.wrapping_sub(self.low)) / r).min(BOT - 1) as u32;
        let idx = table.find(target);
        let (cum, freq) = (table.cum(idx), table.freq(idx));
        self.low += r * cum as u64;
        self.range = r * freq as u64;
        self.normalize()?;
        Ok(table.symbol(idx))
    }

    fn normalize(&mut self) -> Result<()> {
        loop {
            if (self.low ^ (self.low + self.range)) < TOP {
                // top byte settled
            } else if self.range < BOT {
                self.range = BOT - (self.low & (BOT - 1));
            } else {
                return Ok(());
            }
            let b = self.next_byte()?;
            self.code = ((self.code << 8) | b as u64) & 0xFFFF_FFFF;
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
    }
}

/// Entropy-code `symbols[i]` under `cdfs[i]` (tables cycle if fewer tables
/// than symbols are given, which covers the shared-table case).
pub fn range_encode(symbols: &[i32], cdfs: &[&CdfTable]) -> Result<Vec<u8>> {
    debug_assert!(!cdfs.is_empty() || symbols.is_empty());
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        let table = cdfs[i % cdfs.len().max(1)];
        let idx = table.index_of(s).ok_or(Error::OutOfAlphabet {
            symbol: s,
            min: table.min(),
            max: table.max(),
            position: i,
        })?;
        enc.encode(table.cum(idx), table.freq(idx));
    }
    Ok(enc.finish())
}

/// Exact inverse of [`range_encode`] given identical tables and count.
pub fn range_decode(bytes: &[u8], cdfs: &[&CdfTable], count: usize) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let table = cdfs[i % cdfs.len().max(1)];
        out.push(dec.decode(table)?);
    }
    Ok(out)
}
