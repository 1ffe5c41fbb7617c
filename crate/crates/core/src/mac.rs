//! Truncated AES-128 CMAC tags with a rolling counter.

use aes::Aes128;
use cmac::{Cmac, Mac};

use crate::frame::CanFrame;

pub const KEY_LEN: usize = 16;
pub const TAG_LEN: usize = 4;
pub const TAG_BITS: usize = TAG_LEN * 8;
pub const DEFAULT_ACCEPT_WINDOW: u32 = 8;
/// How far below the expected counter a receiver looks to classify a stale tag as a replay.
pub const DEFAULT_REPLAY_LOOKBACK: u32 = 1024;

#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; KEY_LEN]);

impl MacKey {
    pub const fn new(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl core::fmt::Debug for MacKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("MacKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacTag(pub [u8; TAG_LEN]);

impl MacTag {
    /// Tag bits, most significant bit of byte 0 first.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.0
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
    }

    /// Inverse of [`MacTag::bits`]; `None` unless exactly 32 bits are given.
    pub fn from_bits(bits: &[bool]) -> Option<Self> {
        if bits.len() != TAG_BITS {
            return None;
        }
        let mut out = [0u8; TAG_LEN];
        for (i, &b) in bits.iter().enumerate() {
            out[i / 8] |= u8::from(b) << (7 - i % 8);
        }
        Some(Self(out))
    }
}

/// Full 16-byte AES-128 CMAC.
pub fn cmac_aes128(key: &MacKey, message: &[u8]) -> [u8; 16] {
    let mut mac = <Cmac<Aes128> as Mac>::new(key.as_bytes().into());
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Tag for `frame` under an explicit counter value. The authenticated
/// message is `id (4, BE) || counter (4, BE) || dlc (1) || payload`.
pub fn tag_for(key: &MacKey, frame: &CanFrame, counter: u32) -> MacTag {
    let mut msg = [0u8; 9 + 8];
    msg[..4].copy_from_slice(&frame.id().to_be_bytes());
    msg[4..8].copy_from_slice(&counter.to_be_bytes());
    msg[8] = frame.dlc();
    let len = 9 + frame.payload().len();
    msg[9..len].copy_from_slice(frame.payload());
    let digest = cmac_aes128(key, &msg[..len]);
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&digest[..TAG_LEN]);
    MacTag(tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BadTag,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted { counter: u32 },
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted { .. })
    }
}

/// Key plus rolling-counter state. On a transmitter `counter` is the next
/// value to send; on a receiver it is the lowest value still acceptable.
#[derive(Debug, Clone)]
pub struct AuthContext {
    key: MacKey,
    counter: u32,
    accept_window: u32,
    replay_lookback: u32,
    /// Counter values the receiver has moved past, saturating.
    passed: u32,
}

impl AuthContext {
    pub fn new(key: MacKey, counter: u32, accept_window: u32) -> Self {
        Self {
            key,
            counter,
            accept_window: accept_window.max(1),
            replay_lookback: DEFAULT_REPLAY_LOOKBACK,
            passed: 0,
        }
    }

    pub fn with_replay_lookback(mut self, lookback: u32) -> Self {
        self.replay_lookback = lookback;
        self
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    pub fn accept_window(&self) -> u32 {
        self.accept_window
    }

    pub fn key(&self) -> &MacKey {
        &self.key
    }

    /// Tags `frame` with the current counter, then advances it (mod 2^32).
    /// Returns the tag and the counter value used.
    pub fn compute_tag(&mut self, frame: &CanFrame) -> (MacTag, u32) {
        let used = self.counter;
        self.counter = self.counter.wrapping_add(1);
        (tag_for(&self.key, frame, used), used)
    }

    /// Accepts iff `tag` matches a counter in `[counter, counter + accept_window)`.
    /// Every candidate is computed and compared in full, regardless of
    /// where a match occurs.
    pub fn verify_tag(&mut self, frame: &CanFrame, tag: &MacTag) -> Verdict {
        let mut accepted: Option<u32> = None;
        for offset in 0..self.accept_window {
            let candidate = self.counter.wrapping_add(offset);
            if tags_equal(&tag_for(&self.key, frame, candidate), tag) && accepted.is_none() {
                accepted = Some(candidate);
            }
        }
        if let Some(used) = accepted {
            let advance = used.wrapping_sub(self.counter).wrapping_add(1);
            self.passed = self.passed.saturating_add(advance);
            self.counter = used.wrapping_add(1);
            return Verdict::Accepted { counter: used };
        }

        let mut stale = false;
        for back in 1..=self.replay_lookback.min(self.passed) {
            let candidate = self.counter.wrapping_sub(back);
            stale |= tags_equal(&tag_for(&self.key, frame, candidate), tag);
        }
        Verdict::Rejected(if stale {
            RejectReason::Replay
        } else {
            RejectReason::BadTag
        })
    }
}

fn tags_equal(a: &MacTag, b: &MacTag) -> bool {
    a.0.iter()
        .zip(b.0.iter())
        .fold(0u8, |acc, (x, y)| acc | (x ^ y))
        == 0
}
