//! Transmit side of the multiplexed MAC: a square carrier keyed on and off
//! by MAC bits, added in common mode to both lines during payload bit slots.

use alloc::vec::Vec;

use thiserror::Error;

use crate::frame::SlotMap;
use crate::phy::AnalogWaveform;
use crate::ConfigError;

pub const DEFAULT_CARRIER_HZ: f64 = 5.0e6;
pub const DEFAULT_VPP: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{mac_bits} MAC bits do not fit in {slots} payload slots")]
    Capacity { mac_bits: usize, slots: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CarrierConfig {
    #[cfg_attr(feature = "serde", serde(rename = "carrier_hz"))]
    pub frequency: f64,
    pub vpp: f64,
}

impl Default for CarrierConfig {
    fn default() -> Self {
        Self {
            frequency: DEFAULT_CARRIER_HZ,
            vpp: DEFAULT_VPP,
        }
    }
}

impl CarrierConfig {
    pub fn validate(&self, bit_rate: u64, sample_rate: u64) -> Result<(), ConfigError> {
        if !(self.vpp > 0.0) {
            return Err(ConfigError("carrier vpp must be positive"));
        }
        if !(self.frequency >= 10.0 * bit_rate as f64) {
            return Err(ConfigError(
                "carrier frequency must be at least 10x the bit rate",
            ));
        }
        check_sample_rate(self.frequency, sample_rate)
    }

    /// Samples per half carrier period, rounded to the nearest integer.
    pub fn half_period_samples(&self, sample_rate: u64) -> usize {
        (libm::round(sample_rate as f64 / (2.0 * self.frequency)) as usize).max(1)
    }

    pub fn period_samples(&self, sample_rate: u64) -> usize {
        2 * self.half_period_samples(sample_rate)
    }
}

fn check_sample_rate(frequency: f64, sample_rate: u64) -> Result<(), ConfigError> {
    if !(frequency > 0.0) || (sample_rate as f64) < 10.0 * frequency {
        return Err(ConfigError(
            "sample_rate must be at least 10x the carrier frequency",
        ));
    }
    Ok(())
}

/// Square wave starting with a `+vpp/2` half period at sample 0.
pub fn generate_carrier(
    cfg: &CarrierConfig,
    n_samples: usize,
    sample_rate: u64,
) -> Result<Vec<f64>, ConfigError> {
    check_sample_rate(cfg.frequency, sample_rate)?;
    let half = cfg.half_period_samples(sample_rate);
    let amp = cfg.vpp / 2.0;
    Ok((0..n_samples)
        .map(|i| {
            if (i / half).is_multiple_of(2) {
                amp
            } else {
                -amp
            }
        })
        .collect())
}

/// Adds the carrier to both lines over slot `k` wherever `mac[k]` is set.
/// The carrier phase restarts at every slot; everything else is copied.
pub fn multiplex_mac(
    w: &AnalogWaveform,
    slots: &SlotMap,
    mac: &[bool],
    cfg: &CarrierConfig,
) -> Result<AnalogWaveform, ModulationError> {
    cfg.validate(w.bit_rate, w.sample_rate)?;
    if mac.len() > slots.len() {
        return Err(ModulationError::Capacity {
            mac_bits: mac.len(),
            slots: slots.len(),
        });
    }
    let carrier = generate_carrier(cfg, w.samples_per_bit(), w.sample_rate)?;
    let mut out = w.clone();
    for (slot, _) in slots.iter().zip(mac).filter(|(_, &bit)| bit) {
        let range = w.bit_samples(slot.wire_range());
        for (i, c) in range.zip(&carrier) {
            out.canh[i] += c;
            out.canl[i] += c;
        }
    }
    Ok(out)
}
