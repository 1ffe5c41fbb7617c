//! CAN 2.0A/B data frames on the wire.
//!
//! Bits are `bool` with `true` = logical 1 = recessive and `false` = logical
//! 0 = dominant. Stuffing covers SOF through the end of the CRC sequence.

mod crc;
mod stuffing;

use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

pub use crc::crc15;
pub use stuffing::{destuff_bits, stuff_bits, Stuffed, STUFF_RUN};

use stuffing::Destuffer;

pub const DOMINANT: bool = false;
pub const RECESSIVE: bool = true;

pub const MAX_DLC: usize = 8;
pub const STANDARD_ID_MAX: u32 = (1 << 11) - 1;
pub const EXTENDED_ID_MAX: u32 = (1 << 29) - 1;
const EOF_BITS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("invalid frame: {0}")]
    InvalidFrame(&'static str),
    #[error("stuff violation at wire bit {index}")]
    StuffViolation { index: usize },
    #[error("crc mismatch: computed {computed:#06x}, received {received:#06x}")]
    CrcMismatch { computed: u16, received: u16 },
    #[error("form error in {0} field")]
    FormMismatch(&'static str),
    #[error("bitstream ended before the end of the frame")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FrameVariant {
    /// 11-bit identifier.
    Can20A,
    /// 29-bit identifier.
    Can20B,
}

impl FrameVariant {
    pub fn max_id(self) -> u32 {
        match self {
            FrameVariant::Can20A => STANDARD_ID_MAX,
            FrameVariant::Can20B => EXTENDED_ID_MAX,
        }
    }
}

/// A logical CAN 2.0 data frame. The DLC is the payload length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanFrame {
    variant: FrameVariant,
    id: u32,
    payload: Vec<u8>,
}

impl CanFrame {
    pub fn new(variant: FrameVariant, id: u32, payload: &[u8]) -> Result<Self, FrameError> {
        if id > variant.max_id() {
            return Err(FrameError::InvalidFrame("identifier out of range"));
        }
        if payload.len() > MAX_DLC {
            return Err(FrameError::InvalidFrame("dlc out of range"));
        }
        Ok(Self {
            variant,
            id,
            payload: payload.to_vec(),
        })
    }

    pub fn standard(id: u32, payload: &[u8]) -> Result<Self, FrameError> {
        Self::new(FrameVariant::Can20A, id, payload)
    }

    pub fn extended(id: u32, payload: &[u8]) -> Result<Self, FrameError> {
        Self::new(FrameVariant::Can20B, id, payload)
    }

    pub fn variant(&self) -> FrameVariant {
        self.variant
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.payload.len() as u8
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

/// Frame fields in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Sof,
    Arbitration,
    Control,
    Data,
    Crc,
    CrcDelim,
    Ack,
    Eof,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Sof,
        Field::Arbitration,
        Field::Control,
        Field::Data,
        Field::Crc,
        Field::CrcDelim,
        Field::Ack,
        Field::Eof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Sof => "sof",
            Field::Arbitration => "arbitration",
            Field::Control => "control",
            Field::Data => "data",
            Field::Crc => "crc",
            Field::CrcDelim => "crc_delim",
            Field::Ack => "ack",
            Field::Eof => "eof",
        }
    }
}

/// Wire index ranges of each field. A stuff bit belongs to the field of the
/// bit that completed the run, so the spans partition the frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldSpans([Range<usize>; 8]);

impl FieldSpans {
    pub fn get(&self, field: Field) -> Range<usize> {
        self.0[field as usize].clone()
    }

    pub fn field_of(&self, wire_index: usize) -> Option<Field> {
        Field::ALL
            .into_iter()
            .find(|&f| self.0[f as usize].contains(&wire_index))
    }
}

/// One payload bit on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub wire_index: usize,
    /// Bit index within the payload, MSB of byte 0 first.
    pub payload_bit: usize,
}

impl Slot {
    pub fn wire_range(&self) -> Range<usize> {
        self.wire_index..self.wire_index + 1
    }
}

/// Wire positions of the data-field payload bits, stuff bits excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotMap {
    slots: Vec<Slot>,
}

impl SlotMap {
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter()
    }
}

/// Value driven into the ACK slot by the simulated bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AckSlot {
    /// Some receiver acknowledged.
    #[default]
    Dominant,
    /// Nobody acknowledged.
    Recessive,
}

/// A complete frame as transmitted, after stuffing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireBitstream {
    pub bits: Vec<bool>,
    pub spans: FieldSpans,
    pub stuff_positions: Vec<usize>,
    pub slots: SlotMap,
    pub crc: u16,
}

impl WireBitstream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_stuff(&self, wire_index: usize) -> bool {
        self.stuff_positions.binary_search(&wire_index).is_ok()
    }
}

fn push_uint(
    bits: &mut Vec<bool>,
    fields: &mut Vec<Field>,
    field: Field,
    value: u32,
    width: usize,
) {
    for i in (0..width).rev() {
        bits.push((value >> i) & 1 == 1);
        fields.push(field);
    }
}

/// Encodes a data frame with a dominant ACK slot.
pub fn encode_frame(frame: &CanFrame) -> WireBitstream {
    encode_frame_with_ack(frame, AckSlot::Dominant)
}

pub fn encode_frame_with_ack(frame: &CanFrame, ack: AckSlot) -> WireBitstream {
    // Unstuffed SOF..data with the field of each bit.
    let mut bits = Vec::with_capacity(64 + 8 * MAX_DLC);
    let mut fields = Vec::with_capacity(bits.capacity());
    push_uint(&mut bits, &mut fields, Field::Sof, 0, 1);
    match frame.variant {
        FrameVariant::Can20A => {
            push_uint(&mut bits, &mut fields, Field::Arbitration, frame.id, 11);
            // RTR
            push_uint(&mut bits, &mut fields, Field::Arbitration, 0, 1);
            // IDE, r0
            push_uint(&mut bits, &mut fields, Field::Control, 0, 2);
        }
        FrameVariant::Can20B => {
            push_uint(
                &mut bits,
                &mut fields,
                Field::Arbitration,
                frame.id >> 18,
                11,
            );
            // SRR, IDE
            push_uint(&mut bits, &mut fields, Field::Arbitration, 0b11, 2);
            push_uint(
                &mut bits,
                &mut fields,
                Field::Arbitration,
                frame.id & 0x3FFFF,
                18,
            );
            // RTR
            push_uint(&mut bits, &mut fields, Field::Arbitration, 0, 1);
            // r1, r0
            push_uint(&mut bits, &mut fields, Field::Control, 0, 2);
        }
    }
    push_uint(
        &mut bits,
        &mut fields,
        Field::Control,
        u32::from(frame.dlc()),
        4,
    );
    let data_start = bits.len();
    for &byte in &frame.payload {
        push_uint(&mut bits, &mut fields, Field::Data, u32::from(byte), 8);
    }
    let crc = crc15(&bits);
    push_uint(&mut bits, &mut fields, Field::Crc, u32::from(crc), 15);

    let stuffed = stuff_bits(&bits);

    // Map each unstuffed bit to its wire index.
    let mut wire_of = Vec::with_capacity(bits.len());
    let mut stuff_iter = stuffed.stuff_positions.iter().peekable();
    let mut wire = 0;
    for _ in 0..bits.len() {
        while stuff_iter.peek() == Some(&&wire) {
            stuff_iter.next();
            wire += 1;
        }
        wire_of.push(wire);
        wire += 1;
    }

    let mut spans = FieldSpans::default();
    let stuffed_len = stuffed.bits.len();
    let mut start = 0;
    for (i, &field) in fields.iter().enumerate() {
        let next_start = wire_of.get(i + 1).copied().unwrap_or(stuffed_len);
        if i + 1 == fields.len() || fields[i + 1] != field {
            spans.0[field as usize] = start..next_start;
            start = next_start;
        }
    }
    if frame.payload.is_empty() {
        let at = spans.get(Field::Crc).start;
        spans.0[Field::Data as usize] = at..at;
    }

    let slots = SlotMap {
        slots: (0..8 * frame.payload.len())
            .map(|payload_bit| Slot {
                wire_index: wire_of[data_start + payload_bit],
                payload_bit,
            })
            .collect(),
    };

    let mut out = stuffed.bits;
    let tail = out.len();
    out.push(RECESSIVE);
    spans.0[Field::CrcDelim as usize] = tail..tail + 1;
    out.push(ack == AckSlot::Recessive);
    out.push(RECESSIVE);
    spans.0[Field::Ack as usize] = tail + 1..tail + 3;
    out.extend(core::iter::repeat_n(RECESSIVE, EOF_BITS));
    spans.0[Field::Eof as usize] = tail + 3..tail + 3 + EOF_BITS;

    WireBitstream {
        bits: out,
        spans,
        stuff_positions: stuffed.stuff_positions,
        slots,
        crc,
    }
}

/// A frame recovered from wire bits, with the layout the receiver derived
/// from its own destuffing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    pub frame: CanFrame,
    pub slots: SlotMap,
    pub crc: u16,
    pub ack: AckSlot,
    /// Wire bits consumed, through the last EOF bit.
    pub wire_len: usize,
}

/// Decodes one frame starting at `wire[0]` (SOF). Trailing bits after EOF are
/// ignored.
pub fn decode_frame(wire: &[bool]) -> Result<DecodedFrame, FrameError> {
    let mut rd = Destuffer::new(wire);
    let mut logical = Vec::with_capacity(wire.len());

    let take =
        |rd: &mut Destuffer<'_>, logical: &mut Vec<bool>, n: usize| -> Result<u32, FrameError> {
            let v = rd.read_uint(n)?;
            for i in (0..n).rev() {
                logical.push((v >> i) & 1 == 1);
            }
            Ok(v)
        };

    if take(&mut rd, &mut logical, 1)? != 0 {
        return Err(FrameError::FormMismatch("sof"));
    }
    let id_a = take(&mut rd, &mut logical, 11)?;
    let rtr_or_srr = take(&mut rd, &mut logical, 1)?;
    let ide = take(&mut rd, &mut logical, 1)?;
    let (variant, id) = if ide == 0 {
        if rtr_or_srr != 0 {
            return Err(FrameError::FormMismatch("arbitration"));
        }
        // r0
        take(&mut rd, &mut logical, 1)?;
        (FrameVariant::Can20A, id_a)
    } else {
        let id_b = take(&mut rd, &mut logical, 18)?;
        if rtr_or_srr != 1 || take(&mut rd, &mut logical, 1)? != 0 {
            return Err(FrameError::FormMismatch("arbitration"));
        }
        // r1, r0
        take(&mut rd, &mut logical, 2)?;
        (FrameVariant::Can20B, (id_a << 18) | id_b)
    };
    let dlc = take(&mut rd, &mut logical, 4)? as usize;
    if dlc > MAX_DLC {
        return Err(FrameError::FormMismatch("control"));
    }
    let mut payload = Vec::with_capacity(dlc);
    let mut slots = Vec::with_capacity(dlc * 8);
    for byte_index in 0..dlc {
        let mut byte = 0u8;
        for bit_index in 0..8 {
            let wire_index = rd.position();
            let bit = rd.next_bit(false)?.ok_or(FrameError::Truncated)?;
            logical.push(bit);
            byte = (byte << 1) | u8::from(bit);
            slots.push(Slot {
                wire_index,
                payload_bit: byte_index * 8 + bit_index,
            });
        }
        payload.push(byte);
    }
    let computed = crc15(&logical);
    let received = rd.read_uint(15)? as u16;

    if rd.raw_bit()? != RECESSIVE {
        return Err(FrameError::FormMismatch("crc_delim"));
    }
    let ack = if rd.raw_bit()? == DOMINANT {
        AckSlot::Dominant
    } else {
        AckSlot::Recessive
    };
    if rd.raw_bit()? != RECESSIVE {
        return Err(FrameError::FormMismatch("ack"));
    }
    for _ in 0..EOF_BITS {
        if rd.raw_bit()? != RECESSIVE {
            return Err(FrameError::FormMismatch("eof"));
        }
    }
    if computed != received {
        return Err(FrameError::CrcMismatch { computed, received });
    }

    Ok(DecodedFrame {
        frame: CanFrame {
            variant,
            id,
            payload,
        },
        slots: SlotMap { slots },
        crc: received,
        ack,
        wire_len: rd.position(),
    })
}
