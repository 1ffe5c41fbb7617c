//! Single-transmitter bus scenarios: one multiplexed-MAC transmitter, any
//! number of receivers, line delay, additive noise and attacker carriers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::Write;
use core::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::demodulator::{demodulate_stages, DecoderConfig, DemodError, DemodStages};
use crate::frame::{
    decode_frame, encode_frame_with_ack, AckSlot, CanFrame, DecodedFrame, Field, FrameError,
    FrameVariant, WireBitstream,
};
use crate::mac::{AuthContext, MacTag, RejectReason, Verdict, TAG_BITS, TAG_LEN};
use crate::modulator::{multiplex_mac, CarrierConfig, ModulationError};
use crate::phy::{legacy_receive, samples_per_bit, synthesize, AnalogWaveform, PhyLevels};
use crate::ConfigError;

/// Smallest DLC whose payload slots hold a full tag.
pub const MIN_MAC_DLC: usize = TAG_BITS / 8;
pub const DEFAULT_LINE_DELAY: f64 = 400e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Demod(#[from] DemodError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NodeKind {
    CanMmTx,
    CanMmRx,
    LegacyRx,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub auth: Option<AuthContext>,
    pub decoder: Option<DecoderConfig>,
}

impl Node {
    pub fn transmitter(id: &str, auth: AuthContext) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::CanMmTx,
            auth: Some(auth),
            decoder: None,
        }
    }

    pub fn receiver(id: &str, auth: AuthContext, decoder: DecoderConfig) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::CanMmRx,
            auth: Some(auth),
            decoder: Some(decoder),
        }
    }

    pub fn legacy(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::LegacyRx,
            auth: None,
            decoder: None,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = match self.kind {
            NodeKind::CanMmTx => self.auth.is_some() && self.decoder.is_none(),
            NodeKind::CanMmRx => self.auth.is_some() && self.decoder.is_some(),
            NodeKind::LegacyRx => self.auth.is_none() && self.decoder.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!(
                "node {}: {:?} has the wrong auth/decoder configuration",
                self.id, self.kind
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseKind {
    Sine,
    AttackerCarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Coupling {
    /// Same voltage on both lines.
    CommonMode,
    /// `+s/2` on CANH, `-s/2` on CANL.
    Differential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseSpan {
    WholeFrame,
    DataFieldOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSource {
    pub kind: NoiseKind,
    pub frequency: f64,
    /// Peak volts.
    pub amplitude: f64,
    pub coupling: Coupling,
    pub span: NoiseSpan,
}

impl NoiseSource {
    pub fn sine(frequency: f64, amplitude: f64, coupling: Coupling) -> Self {
        Self {
            kind: NoiseKind::Sine,
            frequency,
            amplitude,
            coupling,
            span: NoiseSpan::WholeFrame,
        }
    }

    /// Square wave injected in common mode over the data field.
    pub fn attacker_carrier(frequency: f64, amplitude: f64) -> Self {
        Self {
            kind: NoiseKind::AttackerCarrier,
            frequency,
            amplitude,
            coupling: Coupling::CommonMode,
            span: NoiseSpan::DataFieldOnly,
        }
    }

    fn validate(&self, sample_rate: u64) -> Result<(), ScenarioError> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(ScenarioError::Invalid(
                "noise amplitude must be >= 0".into(),
            ));
        }
        if !(self.frequency > 0.0) || self.frequency >= sample_rate as f64 / 2.0 {
            return Err(ScenarioError::Invalid(
                "noise frequency must lie in (0, sample_rate/2)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub bit_rate: u64,
    pub sample_rate: u64,
    pub levels: PhyLevels,
    pub carrier: CarrierConfig,
    pub nodes: Vec<Node>,
    pub frames: Vec<CanFrame>,
    pub noise: Vec<NoiseSource>,
    /// Seconds, rounded to whole samples.
    pub line_delay: f64,
    pub seed: u64,
    pub ack: AckSlot,
    /// Re-present every delivered bus waveform to the multiplexed-MAC receivers.
    pub replay: bool,
}

impl Scenario {
    /// Three-node hybrid network at the default rates: `node1` transmits,
    /// `node2` decodes the MAC, `node3` is a plain CAN receiver. Both MAC
    /// nodes share `key` and start at counter 0.
    pub fn hybrid(key: crate::mac::MacKey, frames: Vec<CanFrame>, seed: u64) -> Self {
        let auth = AuthContext::new(key, 0, crate::mac::DEFAULT_ACCEPT_WINDOW);
        let carrier = CarrierConfig::default();
        Self {
            bit_rate: crate::phy::DEFAULT_BIT_RATE,
            sample_rate: crate::phy::DEFAULT_SAMPLE_RATE,
            levels: PhyLevels::default(),
            carrier,
            nodes: alloc::vec![
                Node::transmitter("node1", auth.clone()),
                Node::receiver(
                    "node2",
                    auth,
                    DecoderConfig {
                        fc: carrier.frequency,
                        ..DecoderConfig::default()
                    }
                ),
                Node::legacy("node3"),
            ],
            frames,
            noise: Vec::new(),
            line_delay: DEFAULT_LINE_DELAY,
            seed,
            ack: AckSlot::Dominant,
            replay: false,
        }
    }

    pub fn delay_samples(&self) -> usize {
        delay_samples(self.line_delay, self.sample_rate)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        samples_per_bit(self.bit_rate, self.sample_rate)?;
        self.levels.validate()?;
        self.carrier.validate(self.bit_rate, self.sample_rate)?;
        if !(self.line_delay >= 0.0) || !self.line_delay.is_finite() {
            return Err(ScenarioError::Invalid("line_delay must be >= 0".into()));
        }
        let transmitters = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::CanMmTx)
            .count();
        if transmitters != 1 {
            return Err(ScenarioError::Invalid(format!(
                "expected exactly one transmitter, found {transmitters}"
            )));
        }
        for node in &self.nodes {
            node.validate()?;
            if let Some(dec) = &node.decoder {
                dec.validate(self.sample_rate, self.carrier.vpp)?;
            }
        }
        for src in &self.noise {
            src.validate(self.sample_rate)?;
        }
        if let Some((i, f)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, f)| usize::from(f.dlc()) < MIN_MAC_DLC)
        {
            return Err(ScenarioError::Invalid(format!(
                "frame {i} has dlc {}; a {TAG_BITS}-bit tag needs dlc >= {MIN_MAC_DLC}",
                f.dlc()
            )));
        }
        Ok(())
    }
}

/// Reproducible random data frames, 2.0A or 2.0B, DLC in `MIN_MAC_DLC..=8`.
pub fn random_frames(seed: u64, count: usize) -> Vec<CanFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..count)
        .map(|_| {
            let variant = if rng.gen() {
                FrameVariant::Can20A
            } else {
                FrameVariant::Can20B
            };
            let id = rng.gen_range(0..=variant.max_id());
            let dlc = rng.gen_range(MIN_MAC_DLC..=8);
            let mut payload = [0u8; 8];
            rng.fill_bytes(&mut payload[..dlc]);
            CanFrame::new(variant, id, &payload[..dlc]).expect("generated frame is valid")
        })
        .collect()
}

pub fn delay_samples(delay_s: f64, sample_rate: u64) -> usize {
    libm::round(delay_s * sample_rate as f64) as usize
}

/// Shifts the waveform later by `round(delay_s * sample_rate)` samples,
/// padding the front with the recessive level. Bit boundaries move with the
/// signal, so the result stays synchronised for a receiver.
pub fn apply_line_delay(w: &AnalogWaveform, delay_s: f64, levels: &PhyLevels) -> AnalogWaveform {
    let shift = delay_samples(delay_s, w.sample_rate);
    let pad = |line: &[f64]| {
        let mut out = Vec::with_capacity(line.len() + shift);
        out.extend(core::iter::repeat_n(levels.v_rec, shift));
        out.extend_from_slice(line);
        out
    };
    AnalogWaveform {
        sample_rate: w.sample_rate,
        bit_rate: w.bit_rate,
        canh: pad(&w.canh),
        canl: pad(&w.canl),
        bit_boundaries: w.bit_boundaries.iter().map(|b| b + shift).collect(),
    }
}

/// Adds `src` over `data_samples` (for [`NoiseSpan::DataFieldOnly`]) or the
/// whole waveform. The phase is drawn from `seed`.
pub fn inject_noise(
    w: &AnalogWaveform,
    src: &NoiseSource,
    data_samples: Range<usize>,
    seed: u64,
) -> AnalogWaveform {
    let mut out = w.clone();
    if src.amplitude == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = match src.span {
        NoiseSpan::WholeFrame => 0..w.len(),
        NoiseSpan::DataFieldOnly => data_samples.start.min(w.len())..data_samples.end.min(w.len()),
    };
    let fs = w.sample_rate as f64;
    let value: alloc::boxed::Box<dyn Fn(usize) -> f64> = match src.kind {
        NoiseKind::Sine => {
            let phase = rng.gen_range(0.0..2.0 * PI);
            let (amp, f) = (src.amplitude, src.frequency);
            alloc::boxed::Box::new(move |i| amp * libm::sin(2.0 * PI * f * i as f64 / fs + phase))
        }
        NoiseKind::AttackerCarrier => {
            let half = (libm::round(fs / (2.0 * src.frequency)) as usize).max(1);
            let offset = rng.gen_range(0..2 * half);
            let amp = src.amplitude;
            alloc::boxed::Box::new(move |i| {
                if ((i + offset) / half).is_multiple_of(2) {
                    amp
                } else {
                    -amp
                }
            })
        }
    };
    for i in range {
        let s = value(i);
        match src.coupling {
            Coupling::CommonMode => {
                out.canh[i] += s;
                out.canl[i] += s;
            }
            Coupling::Differential => {
                out.canh[i] += s / 2.0;
                out.canl[i] -= s / 2.0;
            }
        }
    }
    out
}

fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "result", rename_all = "snake_case"))]
pub enum VerdictReport {
    Accepted {
        counter: u32,
    },
    BadTag,
    Replay,
    /// The frame itself could not be decoded, so no tag was checked.
    NotVerified,
}

impl From<Verdict> for VerdictReport {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accepted { counter } => VerdictReport::Accepted { counter },
            Verdict::Rejected(RejectReason::BadTag) => VerdictReport::BadTag,
            Verdict::Rejected(RejectReason::Replay) => VerdictReport::Replay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MacReport {
    pub recovered_tag: String,
    pub bit_errors: u32,
    pub verdict: VerdictReport,
    /// RX carrier-detect onset minus TX carrier-detect onset.
    pub latency_samples: Option<i64>,
    pub latency_s: Option<f64>,
    /// TX carrier-detect onset minus first modulated TX sample: filter and
    /// comparator delay of the decoder chain.
    pub detector_lag_samples: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReceiverReport {
    pub node: String,
    pub kind: NodeKind,
    pub decoded: bool,
    pub crc_ok: bool,
    pub frame_match: bool,
    pub error: Option<String>,
    pub mac: Option<MacReport>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FrameReport {
    pub index: usize,
    pub variant: FrameVariant,
    pub id: u32,
    pub dlc: u8,
    pub payload: String,
    pub counter: u32,
    pub tag: String,
    pub wire_bits: usize,
    pub stuff_bits: usize,
    pub receivers: Vec<ReceiverReport>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReplayReport {
    pub frame_index: usize,
    pub node: String,
    pub verdict: VerdictReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NodeSummary {
    pub node: String,
    pub kind: Option<NodeKind>,
    pub frames: usize,
    pub frame_errors: usize,
    pub crc_errors: usize,
    pub mac_bit_errors: u64,
    pub tag_errors: usize,
    pub mac_verified: usize,
    pub mac_failures: usize,
    pub replays_rejected: usize,
    pub replays_accepted: usize,
    pub max_latency_samples: Option<i64>,
    pub min_latency_samples: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NoiseSummary {
    pub source: NoiseSource,
    pub legacy_frame_errors: usize,
    pub mac_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScenarioReport {
    pub bit_rate: u64,
    pub sample_rate: u64,
    pub samples_per_bit: usize,
    pub carrier_hz: f64,
    pub vpp: f64,
    pub line_delay_s: f64,
    pub line_delay_samples: usize,
    pub seed: u64,
    pub frames: Vec<FrameReport>,
    pub replays: Vec<ReplayReport>,
    pub nodes: Vec<NodeSummary>,
    pub noise: Vec<NoiseSummary>,
}

impl ScenarioReport {
    pub fn node(&self, id: &str) -> Option<&NodeSummary> {
        self.nodes.iter().find(|n| n.node == id)
    }

    fn total_by_kind(&self, kind: NodeKind, f: impl Fn(&NodeSummary) -> usize) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == Some(kind))
            .map(f)
            .sum()
    }

    pub fn legacy_frame_errors(&self) -> usize {
        self.total_by_kind(NodeKind::LegacyRx, |n| n.frame_errors)
    }

    pub fn canmm_frame_errors(&self) -> usize {
        self.total_by_kind(NodeKind::CanMmRx, |n| n.frame_errors)
    }

    pub fn mac_failures(&self) -> usize {
        self.total_by_kind(NodeKind::CanMmRx, |n| n.mac_failures)
    }

    pub fn replays_accepted(&self) -> usize {
        self.total_by_kind(NodeKind::CanMmRx, |n| n.replays_accepted)
    }
}

/// Per-receiver intermediate data for one frame.
#[derive(Debug, Clone)]
pub struct ReceiverTrace {
    pub node: String,
    pub kind: NodeKind,
    /// Wire bits as sampled by the threshold receiver.
    pub wire_bits: Vec<bool>,
    pub decoded: Result<DecodedFrame, FrameError>,
    pub stages: Option<DemodStages>,
}

/// Everything produced while moving one frame across the bus.
#[derive(Debug, Clone)]
pub struct FrameTrace {
    pub index: usize,
    pub wire: WireBitstream,
    pub tag: MacTag,
    pub mac_bits: Vec<bool>,
    /// Plain CAN waveform before multiplexing.
    pub tx_plain: AnalogWaveform,
    pub tx: AnalogWaveform,
    /// Decoder chain run on the transmitter's own output.
    pub tx_monitor: DemodStages,
    /// Waveform at the receivers: delayed, with noise.
    pub bus: AnalogWaveform,
    pub receivers: Vec<ReceiverTrace>,
}

pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_traced(s, |_| {})
}

struct RxState {
    node: Node,
    summary: NodeSummary,
}

/// Runs `s`, handing each frame's trace to `observe` before moving on.
pub fn run_scenario_traced(
    s: &Scenario,
    mut observe: impl FnMut(&FrameTrace),
) -> Result<ScenarioReport, ScenarioError> {
    s.validate()?;
    let spb = samples_per_bit(s.bit_rate, s.sample_rate)?;
    let shift = s.delay_samples();
    let tx_node = s
        .nodes
        .iter()
        .find(|n| n.kind == NodeKind::CanMmTx)
        .expect("validated");
    let mut tx_auth = tx_node.auth.clone().expect("validated");
    // The transmitter monitors its own output with a default decoder tuned to its carrier.
    let monitor_cfg = s
        .nodes
        .iter()
        .find_map(|n| n.decoder)
        .unwrap_or(DecoderConfig {
            fc: s.carrier.frequency,
            ..DecoderConfig::default()
        });

    let mut receivers: Vec<RxState> = s
        .nodes
        .iter()
        .filter(|n| n.kind != NodeKind::CanMmTx)
        .map(|n| RxState {
            node: n.clone(),
            summary: NodeSummary {
                node: n.id.clone(),
                kind: Some(n.kind),
                ..NodeSummary::default()
            },
        })
        .collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut frames = Vec::with_capacity(s.frames.len());
    let mut replays = Vec::new();

    for (index, frame) in s.frames.iter().enumerate() {
        let (tag, counter) = tx_auth.compute_tag(frame);
        let wire = encode_frame_with_ack(frame, s.ack);
        let tx_plain = synthesize(&wire.bits, s.bit_rate, s.sample_rate, &s.levels)?;
        let mac_bits: Vec<bool> = tag.bits().collect();
        let tx = multiplex_mac(&tx_plain, &wire.slots, &mac_bits, &s.carrier)?;
        let tx_monitor = demodulate_stages(&tx, &wire.slots, &monitor_cfg)?;

        let first_mod_slot = mac_bits.iter().position(|&b| b);
        let tx_first_mod =
            first_mod_slot.map(|k| tx.bit_boundaries[wire.slots.slots()[k].wire_index]);
        let tx_onset = tx_first_mod.and_then(|from| tx_monitor.first_detect_from(from));

        let mut bus = apply_line_delay(&tx, s.line_delay, &s.levels);
        let data_samples = bus.bit_samples(wire.spans.get(Field::Data));
        for src in &s.noise {
            bus = inject_noise(&bus, src, data_samples.clone(), noise_rng.next_u64());
        }

        let mut rx_reports = Vec::with_capacity(receivers.len());
        let mut rx_traces = Vec::with_capacity(receivers.len());
        for rx in receivers.iter_mut() {
            let (report, trace) = receive(rx, frame, &bus, s, &mac_bits, |stages, slots| {
                // Onset search starts at the slot carrying the first recovered 1.
                let k = stages.bits.iter().position(|&b| b)?;
                let from = bus.bit_boundaries[slots.slots()[k].wire_index];
                let rx_onset = stages.first_detect_from(from)? as i64;
                Some(rx_onset - tx_onset? as i64)
            })?;
            rx.summary.frames += 1;
            if !report.frame_match {
                rx.summary.frame_errors += 1;
            }
            if report.decoded && !report.crc_ok {
                rx.summary.crc_errors += 1;
            }
            if let Some(mac) = &report.mac {
                rx.summary.mac_bit_errors += u64::from(mac.bit_errors);
                if mac.bit_errors > 0 {
                    rx.summary.tag_errors += 1;
                }
                if matches!(mac.verdict, VerdictReport::Accepted { .. }) {
                    rx.summary.mac_verified += 1;
                } else {
                    rx.summary.mac_failures += 1;
                }
                if let Some(l) = mac.latency_samples {
                    rx.summary.max_latency_samples =
                        Some(rx.summary.max_latency_samples.map_or(l, |m| m.max(l)));
                    rx.summary.min_latency_samples =
                        Some(rx.summary.min_latency_samples.map_or(l, |m| m.min(l)));
                }
            }
            rx_reports.push(report);
            rx_traces.push(trace);

            if s.replay && rx.node.kind == NodeKind::CanMmRx {
                let (replayed, _) = receive(rx, frame, &bus, s, &mac_bits, |_, _| None)?;
                let verdict = replayed
                    .mac
                    .map_or(VerdictReport::NotVerified, |m| m.verdict);
                if matches!(verdict, VerdictReport::Accepted { .. }) {
                    rx.summary.replays_accepted += 1;
                } else {
                    rx.summary.replays_rejected += 1;
                }
                replays.push(ReplayReport {
                    frame_index: index,
                    node: rx.node.id.clone(),
                    verdict,
                });
            }
        }

        for r in rx_reports.iter_mut() {
            if let Some(mac) = r.mac.as_mut() {
                if let (Some(l), Some(onset), Some(first)) =
                    (mac.latency_samples, tx_onset, tx_first_mod)
                {
                    mac.latency_s = Some(l as f64 / s.sample_rate as f64);
                    mac.detector_lag_samples = Some(onset as i64 - first as i64);
                }
            }
        }

        observe(&FrameTrace {
            index,
            wire: wire.clone(),
            tag,
            mac_bits: mac_bits.clone(),
            tx_plain,
            tx,
            tx_monitor,
            bus,
            receivers: rx_traces,
        });

        frames.push(FrameReport {
            index,
            variant: frame.variant(),
            id: frame.id(),
            dlc: frame.dlc(),
            payload: to_hex(frame.payload()),
            counter,
            tag: to_hex(&tag.0),
            wire_bits: wire.len(),
            stuff_bits: wire.stuff_positions.len(),
            receivers: rx_reports,
        });
    }

    let nodes: Vec<NodeSummary> = receivers.into_iter().map(|r| r.summary).collect();
    let legacy_errors = nodes
        .iter()
        .filter(|n| n.kind == Some(NodeKind::LegacyRx))
        .map(|n| n.frame_errors)
        .sum();
    let mac_failures = nodes
        .iter()
        .filter(|n| n.kind == Some(NodeKind::CanMmRx))
        .map(|n| n.mac_failures)
        .sum();
    Ok(ScenarioReport {
        bit_rate: s.bit_rate,
        sample_rate: s.sample_rate,
        samples_per_bit: spb,
        carrier_hz: s.carrier.frequency,
        vpp: s.carrier.vpp,
        line_delay_s: shift as f64 / s.sample_rate as f64,
        line_delay_samples: shift,
        seed: s.seed,
        frames,
        replays,
        nodes,
        noise: s
            .noise
            .iter()
            .map(|&source| NoiseSummary {
                source,
                legacy_frame_errors: legacy_errors,
                mac_failures,
            })
            .collect(),
    })
}

/// One receiver processing one bus waveform. `latency` measures the MAC
/// propagation delay from the receiver's decoder stages.
fn receive(
    rx: &mut RxState,
    sent: &CanFrame,
    bus: &AnalogWaveform,
    s: &Scenario,
    sent_mac: &[bool],
    latency: impl Fn(&DemodStages, &crate::frame::SlotMap) -> Option<i64>,
) -> Result<(ReceiverReport, ReceiverTrace), ScenarioError> {
    let wire_bits = legacy_receive(bus, &s.levels);
    let decoded = decode_frame(&wire_bits);
    let mut report = ReceiverReport {
        node: rx.node.id.clone(),
        kind: rx.node.kind,
        decoded: decoded.is_ok(),
        crc_ok: !matches!(decoded, Err(FrameError::CrcMismatch { .. })),
        frame_match: matches!(&decoded, Ok(d) if &d.frame == sent),
        error: decoded.as_ref().err().map(|e| format!("{e}")),
        mac: None,
    };
    let mut stages = None;
    if rx.node.kind == NodeKind::CanMmRx {
        let cfg = rx.node.decoder.expect("validated");
        let auth = rx.node.auth.as_mut().expect("validated");
        report.mac = Some(match &decoded {
            Ok(d) => {
                let st = demodulate_stages(bus, &d.slots, &cfg)?;
                let recovered = &st.bits[..TAG_BITS.min(st.bits.len())];
                let bit_errors = recovered
                    .iter()
                    .zip(sent_mac)
                    .filter(|(a, b)| a != b)
                    .count()
                    + sent_mac.len().abs_diff(recovered.len());
                let tag = MacTag::from_bits(recovered).unwrap_or(MacTag([0; TAG_LEN]));
                let verdict = auth.verify_tag(&d.frame, &tag).into();
                let latency_samples = latency(&st, &d.slots);
                stages = Some(st);
                MacReport {
                    recovered_tag: to_hex(&tag.0),
                    bit_errors: bit_errors as u32,
                    verdict,
                    latency_samples,
                    latency_s: None,
                    detector_lag_samples: None,
                }
            }
            Err(_) => MacReport {
                recovered_tag: String::new(),
                bit_errors: sent_mac.len() as u32,
                verdict: VerdictReport::NotVerified,
                latency_samples: None,
                latency_s: None,
                detector_lag_samples: None,
            },
        });
    }
    let trace = ReceiverTrace {
        node: rx.node.id.clone(),
        kind: rx.node.kind,
        wire_bits,
        decoded,
        stages,
    };
    Ok((report, trace))
}
