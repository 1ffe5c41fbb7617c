mod oracle;

use canmm_core::frame::{
    crc15, decode_frame, destuff_bits, encode_frame, stuff_bits, CanFrame, Field, FrameVariant,
};
use proptest::prelude::*;

fn arb_frame() -> impl Strategy<Value = CanFrame> {
    (
        any::<bool>(),
        any::<u32>(),
        proptest::collection::vec(any::<u8>(), 0..=8),
    )
        .prop_map(|(ext, id, payload)| {
            let variant = if ext {
                FrameVariant::Can20B
            } else {
                FrameVariant::Can20A
            };
            CanFrame::new(variant, id & variant.max_id(), &payload).unwrap()
        })
}

fn max_run(bits: &[bool]) -> usize {
    bits.chunk_by(|a, b| a == b)
        .map(|c| c.len())
        .max()
        .unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn crc_matches_register_oracle(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
        prop_assert_eq!(crc15(&bits), oracle::crc15_register(&bits));
    }

    #[test]
    fn destuff_inverts_stuff(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
        let s = stuff_bits(&bits);
        prop_assert_eq!(&s.bits, &oracle::stuff_reference(&bits));
        prop_assert_eq!(destuff_bits(&s.bits).unwrap(), bits);
        for &p in &s.stuff_positions {
            prop_assert!(p < s.bits.len());
        }
    }

    #[test]
    fn encode_matches_reference_and_round_trips(f in arb_frame()) {
        let ws = encode_frame(&f);
        let reference = oracle::encode_reference(
            f.variant() == FrameVariant::Can20B, f.id(), f.payload());
        prop_assert_eq!(&ws.bits, &reference);
        prop_assert_eq!(decode_frame(&ws.bits).unwrap().frame, f.clone());

        let stuffed_end = ws.spans.get(Field::Crc).end;
        prop_assert!(max_run(&ws.bits[..stuffed_end]) <= 5);
        for field in [Field::CrcDelim, Field::Eof] {
            prop_assert!(ws.bits[ws.spans.get(field)].iter().all(|&b| b));
        }
        prop_assert!(ws.bits[ws.spans.get(Field::Ack).end - 1]);

        // spans partition the frame in order
        let mut at = 0;
        for field in Field::ALL {
            let r = ws.spans.get(field);
            prop_assert_eq!(r.start, at);
            at = r.end;
        }
        prop_assert_eq!(at, ws.len());

        prop_assert_eq!(ws.slots.len(), usize::from(f.dlc()) * 8);
        let data = ws.spans.get(Field::Data);
        let mut prev = None;
        for (k, slot) in ws.slots.iter().enumerate() {
            prop_assert_eq!(slot.payload_bit, k);
            prop_assert!(data.contains(&slot.wire_index));
            prop_assert!(!ws.is_stuff(slot.wire_index));
            prop_assert!(prev.is_none_or(|p| p < slot.wire_index));
            prev = Some(slot.wire_index);
            let byte = f.payload()[k / 8];
            prop_assert_eq!(ws.bits[slot.wire_index], (byte >> (7 - k % 8)) & 1 == 1);
        }
    }
}
