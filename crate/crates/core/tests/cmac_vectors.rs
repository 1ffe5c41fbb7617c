//! AES-128 CMAC known-answer vectors (NIST SP 800-38B, also RFC 4493).

use canmm_core::mac::{cmac_aes128, tag_for, MacKey};
use canmm_core::CanFrame;

fn h(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn key() -> MacKey {
    MacKey::new(h("2b7e151628aed2a6abf7158809cf4f3c").try_into().unwrap())
}

const MSG: &str = "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e5130c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710";

pub const VECTORS: [(usize, &str); 4] = [
    (0, "bb1d6929e95937287fa37d129b756746"),
    (16, "070a16b46b4d4144f79bdd9dd04a287c"),
    (40, "dfa66747de9ae63030ca32611497c827"),
    (64, "51f0bebf7e3b9d92fc49741779363cfe"),
];

#[test]
fn known_answers() {
    let msg = h(MSG);
    for (len, expected) in VECTORS {
        assert_eq!(
            cmac_aes128(&key(), &msg[..len]).to_vec(),
            h(expected),
            "len {len}"
        );
    }
}

#[test]
fn distinct_messages_distinct_digests() {
    let a = cmac_aes128(&key(), b"frame-a");
    let b = cmac_aes128(&key(), b"frame-b");
    assert_ne!(a, b);
}

#[test]
fn tag_is_prefix_of_digest() {
    let f = CanFrame::extended(0x1234567, &[9, 8, 7, 6, 5]).unwrap();
    let mut msg = Vec::new();
    msg.extend(0x1234567u32.to_be_bytes());
    msg.extend(42u32.to_be_bytes());
    msg.push(5);
    msg.extend([9, 8, 7, 6, 5]);
    let digest = cmac_aes128(&key(), &msg);
    assert_eq!(tag_for(&key(), &f, 42).0, digest[..4]);
}
