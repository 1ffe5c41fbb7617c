//! Reference implementations used only by tests. Written from the ISO 11898-1
//! register description, independent of the crate's code paths.

#![allow(dead_code)]

/// Shift-register CRC-15: `nxt = bit ^ crc[14]; crc <<= 1; if nxt { crc ^= 0x4599 }`.
pub fn crc15_register(bits: &[bool]) -> u16 {
    let mut reg: u16 = 0;
    for &bit in bits {
        let nxt = bit ^ ((reg >> 14) & 1 == 1);
        reg = (reg << 1) & 0x7FFF;
        if nxt {
            reg ^= 0x4599;
        }
    }
    reg
}

/// Stuffing by explicit run tracking over the output stream.
pub fn stuff_reference(bits: &[bool]) -> Vec<bool> {
    let mut out: Vec<bool> = Vec::new();
    for &b in bits {
        out.push(b);
        let n = out.len();
        if n >= 5 && out[n - 5..].iter().all(|&x| x == b) {
            // The run must start exactly 5 back (not continue a stuffed run).
            if n == 5 || out[n - 6] != b {
                out.push(!b);
            }
        }
    }
    out
}

fn push(bits: &mut Vec<bool>, v: u32, n: usize) {
    for i in (0..n).rev() {
        bits.push((v >> i) & 1 == 1);
    }
}

/// Complete wire encoding of a data frame assembled field by field.
pub fn encode_reference(extended: bool, id: u32, payload: &[u8]) -> Vec<bool> {
    let mut b = vec![false];
    if extended {
        push(&mut b, id >> 18, 11);
        b.extend([true, true]);
        push(&mut b, id & 0x3FFFF, 18);
        b.extend([false, false, false]);
    } else {
        push(&mut b, id, 11);
        b.extend([false, false, false]);
    }
    push(&mut b, payload.len() as u32, 4);
    for &byte in payload {
        push(&mut b, byte as u32, 8);
    }
    let crc = crc15_register(&b);
    push(&mut b, crc as u32, 15);
    let mut wire = stuff_reference(&b);
    wire.extend([true, false, true]);
    wire.extend([true; 7]);
    wire
}

#[test]
fn reference_stuffing_hand_cases() {
    let p = |s: &str| s.bytes().map(|c| c == b'1').collect::<Vec<_>>();
    assert_eq!(stuff_reference(&p("000000")), p("0000010"));
    assert_eq!(stuff_reference(&p("1111100000")), p("111110000010"));
    assert_eq!(stuff_reference(&p("10101")), p("10101"));
}
