//! CRC-15 as used by classic CAN frames.

/// Generator x^15 + x^14 + x^10 + x^8 + x^7 + x^4 + x^3 + 1, including the x^15 term.
const GENERATOR: u32 = 0xC599;

/// CRC-15 over logical bits (`true` = 1 = recessive), zero initial value.
///
/// Computed as the remainder of `M(x) * x^15` modulo the generator.
pub fn crc15(bits: &[bool]) -> u16 {
    let mut rem: u32 = 0;
    for &bit in bits.iter().chain([false; 15].iter()) {
        rem = (rem << 1) | u32::from(bit);
        if rem & 0x8000 != 0 {
            rem ^= GENERATOR;
        }
    }
    rem as u16
}
