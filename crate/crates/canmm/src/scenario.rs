//! Scenario files: JSON in, [`Scenario`] out, plus the run expectations that
//! decide the exit status.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use canmm_core::bus::{
    random_frames, Coupling, Node, NodeKind, NoiseKind, NoiseSource, NoiseSpan, Scenario,
    ScenarioReport, DEFAULT_LINE_DELAY,
};
use canmm_core::demodulator::DecoderConfig;
use canmm_core::frame::{AckSlot, CanFrame, FrameVariant};
use canmm_core::mac::{AuthContext, MacKey, DEFAULT_ACCEPT_WINDOW};
use canmm_core::modulator::CarrierConfig;
use canmm_core::phy::{PhyLevels, DEFAULT_BIT_RATE, DEFAULT_SAMPLE_RATE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub variant: FrameVariant,
    pub id: u32,
    /// Hex payload bytes.
    #[serde(default)]
    pub payload: String,
    /// Must match the payload length when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dlc: Option<u32>,
}

impl FrameSpec {
    pub fn to_frame(&self) -> Result<CanFrame> {
        let payload = hex::decode(self.payload.trim()).context("payload is not valid hex")?;
        if let Some(dlc) = self.dlc {
            ensure!(dlc <= 8, "dlc out of range: {dlc}");
            ensure!(
                dlc as usize == payload.len(),
                "dlc {dlc} does not match payload length {}",
                payload.len()
            );
        }
        ensure!(payload.len() <= 8, "dlc out of range: {}", payload.len());
        Ok(CanFrame::new(self.variant, self.id, &payload)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthSpec {
    /// 32 hex characters.
    pub key: String,
    #[serde(default)]
    pub counter: u32,
    #[serde(default = "default_window")]
    pub accept_window: u32,
}

fn default_window() -> u32 {
    DEFAULT_ACCEPT_WINDOW
}

impl AuthSpec {
    fn to_context(&self) -> Result<AuthContext> {
        let bytes = hex::decode(self.key.trim()).context("key is not valid hex")?;
        let key: [u8; 16] = bytes
            .try_into()
            .map_err(|_| anyhow::anyhow!("key must be 32 hex characters (128 bits)"))?;
        ensure!(self.accept_window >= 1, "accept_window must be >= 1");
        Ok(AuthContext::new(
            MacKey::new(key),
            self.counter,
            self.accept_window,
        ))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSpec {
    /// Defaults to the carrier frequency.
    pub fc: Option<f64>,
    pub q_factor: Option<f64>,
    pub detect_threshold: Option<f64>,
    pub duty_threshold: Option<f64>,
    pub hold_samples: Option<usize>,
}

impl DecoderSpec {
    fn to_config(&self, carrier: &CarrierConfig) -> DecoderConfig {
        let d = DecoderConfig::default();
        DecoderConfig {
            fc: self.fc.unwrap_or(carrier.frequency),
            q_factor: self.q_factor.unwrap_or(d.q_factor),
            detect_threshold: self.detect_threshold.unwrap_or(d.detect_threshold),
            duty_threshold: self.duty_threshold.unwrap_or(d.duty_threshold),
            hold_samples: self.hold_samples,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub auth: Option<AuthSpec>,
    pub decoder: Option<DecoderSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub frequency: f64,
    pub amplitude: f64,
    pub coupling: Option<Coupling>,
    pub span: Option<NoiseSpan>,
}

impl NoiseSpec {
    fn to_source(&self) -> NoiseSource {
        let base = match self.kind {
            NoiseKind::Sine => {
                NoiseSource::sine(self.frequency, self.amplitude, Coupling::CommonMode)
            }
            NoiseKind::AttackerCarrier => {
                NoiseSource::attacker_carrier(self.frequency, self.amplitude)
            }
        };
        NoiseSource {
            coupling: self.coupling.unwrap_or(base.coupling),
            span: self.span.unwrap_or(base.span),
            ..base
        }
    }
}

/// Bounds on the report checked by `canmm run`. A `null` maximum is unbounded.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub max_legacy_frame_errors: Option<usize>,
    pub max_canmm_frame_errors: Option<usize>,
    pub min_mac_failures: usize,
    pub max_mac_failures: Option<usize>,
    pub max_replays_accepted: Option<usize>,
}

impl Default for Expectations {
    fn default() -> Self {
        Self {
            max_legacy_frame_errors: Some(0),
            max_canmm_frame_errors: Some(0),
            min_mac_failures: 0,
            max_mac_failures: Some(0),
            max_replays_accepted: Some(0),
        }
    }
}

impl Expectations {
    /// Human-readable list of violated bounds; empty when all hold.
    pub fn check(&self, r: &ScenarioReport) -> Vec<String> {
        let mut out = Vec::new();
        let mut max = |name: &str, value: usize, bound: Option<usize>| {
            if let Some(b) = bound {
                if value > b {
                    out.push(format!("{name} = {value}, expected <= {b}"));
                }
            }
        };
        max(
            "legacy_frame_errors",
            r.legacy_frame_errors(),
            self.max_legacy_frame_errors,
        );
        max(
            "canmm_frame_errors",
            r.canmm_frame_errors(),
            self.max_canmm_frame_errors,
        );
        max("mac_failures", r.mac_failures(), self.max_mac_failures);
        max(
            "replays_accepted",
            r.replays_accepted(),
            self.max_replays_accepted,
        );
        if r.mac_failures() < self.min_mac_failures {
            out.push(format!(
                "mac_failures = {}, expected >= {}",
                r.mac_failures(),
                self.min_mac_failures
            ));
        }
        out
    }
}

fn default_bit_rate() -> u64 {
    DEFAULT_BIT_RATE
}

fn default_sample_rate() -> u64 {
    DEFAULT_SAMPLE_RATE
}

fn default_line_delay() -> f64 {
    DEFAULT_LINE_DELAY
}

/// On-disk scenario document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default = "default_bit_rate")]
    pub bit_rate: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u64,
    #[serde(default)]
    pub levels: PhyLevels,
    pub carrier: CarrierConfig,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub frames: Vec<FrameSpec>,
    /// Random frames appended after `frames`, drawn from `seed`.
    #[serde(default)]
    pub random_frames: usize,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default = "default_line_delay")]
    pub line_delay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ack: AckSlot,
    #[serde(default)]
    pub replay: bool,
    #[serde(default)]
    pub expect: Expectations,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid scenario JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Builds the simulator scenario. `seed` overrides the file's seed.
    pub fn build(&self, seed: Option<u64>) -> Result<Scenario> {
        let seed = seed.unwrap_or(self.seed);
        let mut frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| f.to_frame().with_context(|| format!("frame {i}")))
            .collect::<Result<Vec<_>>>()?;
        frames.extend(random_frames(seed, self.random_frames));
        if frames.is_empty() {
            bail!("scenario has no frames");
        }

        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(Node {
                    id: n.id.clone(),
                    kind: n.kind,
                    auth: n
                        .auth
                        .as_ref()
                        .map(AuthSpec::to_context)
                        .transpose()
                        .with_context(|| format!("node {}", n.id))?,
                    decoder: n.decoder.as_ref().map(|d| d.to_config(&self.carrier)),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let s = Scenario {
            bit_rate: self.bit_rate,
            sample_rate: self.sample_rate,
            levels: self.levels,
            carrier: self.carrier,
            nodes,
            frames,
            noise: self.noise.iter().map(NoiseSpec::to_source).collect(),
            line_delay: self.line_delay,
            seed,
            ack: self.ack,
            replay: self.replay,
        };
        s.validate()?;
        Ok(s)
    }
}
