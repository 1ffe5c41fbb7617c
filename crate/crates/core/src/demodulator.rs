//! Receive-side MAC decoder: per-line band-pass filter, threshold
//! comparator with envelope hold, AND of both lines, and a per-slot duty
//! counter.

use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::frame::SlotMap;
use crate::phy::AnalogWaveform;
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemodError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("detect streams differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("slot at wire bit {0} lies outside the waveform")]
    SlotOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DecoderConfig {
    /// Filter centre; must match the transmit carrier.
    pub fc: f64,
    pub q_factor: f64,
    pub detect_threshold: f64,
    pub duty_threshold: f64,
    /// Envelope hold in samples; one carrier period when unset.
    pub hold_samples: Option<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            fc: crate::modulator::DEFAULT_CARRIER_HZ,
            q_factor: 5.0,
            detect_threshold: 0.05,
            duty_threshold: 0.5,
            hold_samples: None,
        }
    }
}

impl DecoderConfig {
    /// `vpp` is the transmit carrier's peak-to-peak amplitude.
    pub fn validate(&self, sample_rate: u64, vpp: f64) -> Result<(), ConfigError> {
        if !(self.duty_threshold > 0.0 && self.duty_threshold < 1.0) {
            return Err(ConfigError("duty_threshold must lie in (0, 1)"));
        }
        if !(self.detect_threshold < vpp / 2.0) {
            return Err(ConfigError("detect_threshold must be below vpp/2"));
        }
        if self.hold_samples == Some(0) {
            return Err(ConfigError("hold_samples must be at least 1"));
        }
        Biquad::bandpass(sample_rate, self.fc, self.q_factor).map(|_| ())
    }

    pub fn hold(&self, sample_rate: u64) -> usize {
        self.hold_samples
            .unwrap_or_else(|| libm::round(sample_rate as f64 / self.fc) as usize)
            .max(1)
    }
}

/// Second-order band-pass section, unity gain at the centre frequency.
/// Coefficients are normalised so that `a0 = 1`; `b1` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    pub fn bandpass(sample_rate: u64, fc: f64, q: f64) -> Result<Self, ConfigError> {
        let fs = sample_rate as f64;
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(ConfigError(
                "band-pass centre must lie in (0, sample_rate/2)",
            ));
        }
        if !(q > 0.0) {
            return Err(ConfigError("q_factor must be positive"));
        }
        let w0 = 2.0 * PI * fc / fs;
        let alpha = libm::sin(w0) / (2.0 * q);
        let a0 = 1.0 + alpha;
        Ok(Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * libm::cos(w0) / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        })
    }

    /// Sets the state to the steady state of a constant input `x` (output 0,
    /// since the section has no DC gain).
    pub fn settle_at(&mut self, x: f64) {
        self.x1 = x;
        self.x2 = x;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Filters one line. The section starts settled on the first sample, so a
/// constant bus level before the frame produces no start-up transient.
pub fn bandpass(
    signal: &[f64],
    sample_rate: u64,
    fc: f64,
    q: f64,
) -> Result<Vec<f64>, ConfigError> {
    let mut f = Biquad::bandpass(sample_rate, fc, q)?;
    if let Some(&first) = signal.first() {
        f.settle_at(first);
    }
    Ok(signal.iter().map(|&x| f.process(x)).collect())
}

/// `|x| > threshold`, with every hit held high for `hold_samples` samples.
pub fn threshold_detect(filtered: &[f64], threshold: f64, hold_samples: usize) -> Vec<bool> {
    let mut remaining = 0usize;
    filtered
        .iter()
        .map(|&x| {
            if libm::fabs(x) > threshold {
                remaining = hold_samples;
            }
            if remaining > 0 {
                remaining -= 1;
                true
            } else {
                false
            }
        })
        .collect()
}

pub fn conjunction(h: &[bool], l: &[bool]) -> Result<Vec<bool>, DemodError> {
    if h.len() != l.len() {
        return Err(DemodError::LengthMismatch(h.len(), l.len()));
    }
    Ok(h.iter().zip(l).map(|(&a, &b)| a && b).collect())
}

/// Central 80 % of a bit starting at `start`.
pub fn decision_window(start: usize, samples_per_bit: usize) -> core::ops::Range<usize> {
    let margin = samples_per_bit / 10;
    start + margin..start + samples_per_bit - margin
}

/// One bit per slot: set iff the detected fraction of the slot's central
/// window exceeds `duty_threshold`.
pub fn counter_decode(
    detect: &[bool],
    bit_boundaries: &[usize],
    slots: &SlotMap,
    samples_per_bit: usize,
    duty_threshold: f64,
) -> Result<Vec<bool>, DemodError> {
    slots
        .iter()
        .map(|slot| {
            let start = *bit_boundaries
                .get(slot.wire_index)
                .ok_or(DemodError::SlotOutOfRange(slot.wire_index))?;
            let window = decision_window(start, samples_per_bit);
            let Some(hits) = detect.get(window.clone()) else {
                return Err(DemodError::SlotOutOfRange(slot.wire_index));
            };
            let count = hits.iter().filter(|&&d| d).count();
            Ok(count as f64 / window.len() as f64 > duty_threshold)
        })
        .collect()
}

/// Every intermediate stream of one decoder run.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodStages {
    pub filtered_h: Vec<f64>,
    pub filtered_l: Vec<f64>,
    pub detect_h: Vec<bool>,
    pub detect_l: Vec<bool>,
    pub detect: Vec<bool>,
    pub bits: Vec<bool>,
}

impl DemodStages {
    /// First detected sample at or after `from`.
    pub fn first_detect_from(&self, from: usize) -> Option<usize> {
        self.detect
            .get(from..)?
            .iter()
            .position(|&d| d)
            .map(|p| p + from)
    }
}

pub fn demodulate_stages(
    w: &AnalogWaveform,
    slots: &SlotMap,
    cfg: &DecoderConfig,
) -> Result<DemodStages, DemodError> {
    let filtered_h = bandpass(&w.canh, w.sample_rate, cfg.fc, cfg.q_factor)?;
    let filtered_l = bandpass(&w.canl, w.sample_rate, cfg.fc, cfg.q_factor)?;
    let hold = cfg.hold(w.sample_rate);
    let detect_h = threshold_detect(&filtered_h, cfg.detect_threshold, hold);
    let detect_l = threshold_detect(&filtered_l, cfg.detect_threshold, hold);
    let detect = conjunction(&detect_h, &detect_l)?;
    let bits = counter_decode(
        &detect,
        &w.bit_boundaries,
        slots,
        w.samples_per_bit(),
        cfg.duty_threshold,
    )?;
    Ok(DemodStages {
        filtered_h,
        filtered_l,
        detect_h,
        detect_l,
        detect,
        bits,
    })
}

/// Recovers one bit per slot from the carrier on both lines.
pub fn demodulate(
    w: &AnalogWaveform,
    slots: &SlotMap,
    cfg: &DecoderConfig,
) -> Result<Vec<bool>, DemodError> {
    demodulate_stages(w, slots, cfg).map(|s| s.bits)
}
