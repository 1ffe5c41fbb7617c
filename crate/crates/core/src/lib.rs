//! Simulation core for multiplexed-MAC CAN.
//!
//! A MAC tag is carried alongside an ordinary CAN 2.0 frame by keying a
//! common-mode square carrier on and off during the payload bit slots.
//! Differential receivers never see it; a band-pass decoder on each line
//! recovers it. The pipeline is
//!
//! ```text
//! CanFrame -> encode_frame -> synthesize -> multiplex_mac -> bus
//!   bus -> legacy_receive -> decode_frame              (any node)
//!   bus -> demodulate -> MacTag -> AuthContext::verify_tag   (multiplexed-MAC node)
//! ```
//!
//! The crate is `no_std` and needs only `alloc`.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bus;
pub mod demodulator;
pub mod frame;
pub mod mac;
pub mod modulator;
pub mod phy;

/// Rejected configuration value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub &'static str);

pub use demodulator::{demodulate, DecoderConfig};
pub use frame::{
    decode_frame, encode_frame, CanFrame, FrameError, FrameVariant, SlotMap, WireBitstream,
};
pub use mac::{AuthContext, MacKey, MacTag, RejectReason, Verdict};
pub use modulator::{multiplex_mac, CarrierConfig};
pub use phy::{legacy_receive, synthesize, AnalogWaveform, PhyLevels};
