//! Bit stuffing: a complement bit follows every run of five identical bits.

use alloc::vec::Vec;

use super::FrameError;

/// Maximum run of identical bits allowed on the wire before a stuff bit.
pub const STUFF_RUN: usize = 5;

/// Output of [`stuff_bits`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stuffed {
    pub bits: Vec<bool>,
    /// Indices into `bits` that are inserted stuff bits, ascending.
    pub stuff_positions: Vec<usize>,
}

/// Inserts a complement bit after every run of five identical bits. Stuff
/// bits count towards the next run.
pub fn stuff_bits(bits: &[bool]) -> Stuffed {
    let mut out = Vec::with_capacity(bits.len() + bits.len() / 4 + 1);
    let mut stuff_positions = Vec::new();
    let mut run = 0usize;
    let mut last = None;
    for &bit in bits {
        out.push(bit);
        if last == Some(bit) {
            run += 1;
        } else {
            run = 1;
            last = Some(bit);
        }
        if run == STUFF_RUN {
            stuff_positions.push(out.len());
            out.push(!bit);
            last = Some(!bit);
            run = 1;
        }
    }
    Stuffed {
        bits: out,
        stuff_positions,
    }
}

/// Removes stuff bits. A sixth identical bit where a stuff bit is due is a
/// [`FrameError::StuffViolation`]. Input ending right after a run of five is
/// accepted.
pub fn destuff_bits(stuffed: &[bool]) -> Result<Vec<bool>, FrameError> {
    let mut reader = Destuffer::new(stuffed);
    let mut out = Vec::with_capacity(stuffed.len());
    while let Some(bit) = reader.next_bit(true)? {
        out.push(bit);
    }
    Ok(out)
}

/// Incremental destuffing reader over raw wire bits.
///
/// Stuff bits are consumed eagerly right after the fifth bit of a run, so a
/// trailing stuff bit after the CRC field is swallowed together with the
/// last CRC bit.
pub(crate) struct Destuffer<'a> {
    wire: &'a [bool],
    pos: usize,
    run: usize,
    last: Option<bool>,
    pub(crate) stuff_positions: Vec<usize>,
}

impl<'a> Destuffer<'a> {
    pub(crate) fn new(wire: &'a [bool]) -> Self {
        Self {
            wire,
            pos: 0,
            run: 0,
            last: None,
            stuff_positions: Vec::new(),
        }
    }

    /// Wire index of the next bit to be read.
    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    /// Reads the next data bit, returning `None` at the end of input.
    /// `allow_missing_stuff` tolerates input ending where a stuff bit is due.
    pub(crate) fn next_bit(
        &mut self,
        allow_missing_stuff: bool,
    ) -> Result<Option<bool>, FrameError> {
        let Some(&bit) = self.wire.get(self.pos) else {
            return Ok(None);
        };
        self.pos += 1;
        if self.last == Some(bit) {
            self.run += 1;
        } else {
            self.run = 1;
            self.last = Some(bit);
        }
        if self.run == STUFF_RUN {
            match self.wire.get(self.pos) {
                Some(&stuff) if stuff != bit => {
                    self.stuff_positions.push(self.pos);
                    self.pos += 1;
                    self.last = Some(stuff);
                    self.run = 1;
                }
                Some(_) => return Err(FrameError::StuffViolation { index: self.pos }),
                None if allow_missing_stuff => {}
                None => return Err(FrameError::Truncated),
            }
        }
        Ok(Some(bit))
    }

    /// Reads `n` data bits as an unsigned big-endian integer.
    pub(crate) fn read_uint(&mut self, n: usize) -> Result<u32, FrameError> {
        let mut v = 0u32;
        for _ in 0..n {
            let bit = self.next_bit(false)?.ok_or(FrameError::Truncated)?;
            v = (v << 1) | u32::from(bit);
        }
        Ok(v)
    }

    /// Reads one raw wire bit with no destuffing (fields after the CRC).
    pub(crate) fn raw_bit(&mut self) -> Result<bool, FrameError> {
        let bit = *self.wire.get(self.pos).ok_or(FrameError::Truncated)?;
        self.pos += 1;
        Ok(bit)
    }
}
