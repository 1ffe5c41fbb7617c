//! Differential line levels: waveform synthesis and the threshold receiver
//! found in an ordinary CAN transceiver.

use alloc::vec::Vec;

use crate::frame::{DOMINANT, RECESSIVE};
use crate::ConfigError;

pub const DEFAULT_BIT_RATE: u64 = 500_000;
pub const DEFAULT_SAMPLE_RATE: u64 = 50_000_000;

/// Bus voltages and receiver thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PhyLevels {
    pub v_rec: f64,
    pub v_dom_h: f64,
    pub v_dom_l: f64,
    /// Differential above this reads dominant.
    pub th_dom: f64,
    /// Differential below this reads recessive.
    pub th_rec: f64,
}

impl Default for PhyLevels {
    fn default() -> Self {
        Self {
            v_rec: 2.5,
            v_dom_h: 3.5,
            v_dom_l: 1.5,
            th_dom: 0.9,
            th_rec: 0.5,
        }
    }
}

impl PhyLevels {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.v_dom_h - self.v_dom_l > self.th_dom) {
            return Err(ConfigError("dominant differential must exceed th_dom"));
        }
        if !(self.th_rec < self.th_dom) {
            return Err(ConfigError("th_rec must be below th_dom"));
        }
        Ok(())
    }
}

/// Uniformly sampled CANH/CANL voltages.
///
/// `bit_boundaries[k]` is the first sample of wire bit `k` as seen by the
/// receiver that owns this waveform; every bit spans `samples_per_bit`
/// samples from there.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogWaveform {
    pub sample_rate: u64,
    pub bit_rate: u64,
    pub canh: Vec<f64>,
    pub canl: Vec<f64>,
    pub bit_boundaries: Vec<usize>,
}

impl AnalogWaveform {
    pub fn len(&self) -> usize {
        self.canh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canh.is_empty()
    }

    pub fn samples_per_bit(&self) -> usize {
        (self.sample_rate / self.bit_rate) as usize
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate as f64
    }

    pub fn differential(&self) -> impl Iterator<Item = f64> + '_ {
        self.canh.iter().zip(&self.canl).map(|(h, l)| h - l)
    }

    /// Sample range of wire bits `bits`, clipped to the waveform.
    pub fn bit_samples(&self, bits: core::ops::Range<usize>) -> core::ops::Range<usize> {
        if bits.is_empty() {
            let at = self
                .bit_boundaries
                .get(bits.start)
                .copied()
                .unwrap_or(self.len());
            return at..at;
        }
        let start = self.bit_boundaries[bits.start];
        let end = self.bit_boundaries[bits.end - 1] + self.samples_per_bit();
        start..end.min(self.len())
    }
}

/// Checks that `sample_rate` holds a whole number of samples per bit.
pub fn samples_per_bit(bit_rate: u64, sample_rate: u64) -> Result<usize, ConfigError> {
    if bit_rate == 0 || sample_rate == 0 {
        return Err(ConfigError("bit and sample rates must be positive"));
    }
    if !sample_rate.is_multiple_of(bit_rate) {
        return Err(ConfigError(
            "sample_rate must be an integer multiple of bit_rate",
        ));
    }
    Ok((sample_rate / bit_rate) as usize)
}

/// Renders wire bits with ideal rectangular edges.
pub fn synthesize(
    bits: &[bool],
    bit_rate: u64,
    sample_rate: u64,
    levels: &PhyLevels,
) -> Result<AnalogWaveform, ConfigError> {
    let spb = samples_per_bit(bit_rate, sample_rate)?;
    let n = bits.len() * spb;
    let mut canh = Vec::with_capacity(n);
    let mut canl = Vec::with_capacity(n);
    for &bit in bits {
        let (h, l) = if bit == RECESSIVE {
            (levels.v_rec, levels.v_rec)
        } else {
            (levels.v_dom_h, levels.v_dom_l)
        };
        canh.extend(core::iter::repeat_n(h, spb));
        canl.extend(core::iter::repeat_n(l, spb));
    }
    Ok(AnalogWaveform {
        sample_rate,
        bit_rate,
        canh,
        canl,
        bit_boundaries: (0..bits.len()).map(|k| k * spb).collect(),
    })
}

/// Sample offset of the decision point within a bit (75 %).
pub fn sample_point(samples_per_bit: usize) -> usize {
    samples_per_bit * 3 / 4
}

/// Recovers wire bits from the differential at each bit's sample point.
/// Levels between the two thresholds keep the previous decision; the bus
/// starts idle (recessive).
pub fn legacy_receive(w: &AnalogWaveform, levels: &PhyLevels) -> Vec<bool> {
    let offset = sample_point(w.samples_per_bit());
    let mut state = RECESSIVE;
    w.bit_boundaries
        .iter()
        .map(|&b| {
            let i = b + offset;
            if i < w.len() {
                let diff = w.canh[i] - w.canl[i];
                if diff > levels.th_dom {
                    state = DOMINANT;
                } else if diff < levels.th_rec {
                    state = RECESSIVE;
                }
            }
            state
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recessive_and_dominant_levels() {
        let l = PhyLevels::default();
        let w = synthesize(&[RECESSIVE], 500_000, 50_000_000, &l).unwrap();
        assert_eq!(w.len(), 100);
        assert!(w.differential().all(|d| d == 0.0));
        assert!(w.canh.iter().all(|&v| v == 2.5));

        let w = synthesize(&[DOMINANT], 500_000, 50_000_000, &l).unwrap();
        assert!(w.differential().all(|d| (d - 2.0).abs() < 1e-12));
        assert!(w.canh.iter().all(|&v| v == 3.5) && w.canl.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn sample_bookkeeping() {
        let bits: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let w = synthesize(&bits, 500_000, 50_000_000, &PhyLevels::default()).unwrap();
        assert_eq!(w.samples_per_bit(), 100);
        assert_eq!(w.len(), 1000);
        assert_eq!(w.bit_boundaries[9], 900);
        assert_eq!(w.bit_samples(2..4), 200..400);
    }

    #[test]
    fn non_integer_samples_per_bit_is_rejected() {
        assert!(synthesize(&[true], 500_000, 1_250_001, &PhyLevels::default()).is_err());
        assert!(samples_per_bit(0, 10).is_err());
    }

    #[test]
    fn hysteresis_holds_between_thresholds() {
        let l = PhyLevels::default();
        let mut w = synthesize(&[DOMINANT, DOMINANT, RECESSIVE, RECESSIVE], 1, 4, &l).unwrap();
        // Bit 1 at 0.7 V differential: ambiguous, keeps dominant.
        for i in 4..8 {
            w.canh[i] = 2.85;
            w.canl[i] = 2.15;
        }
        // Bit 3 ambiguous after a recessive bit: keeps recessive.
        for i in 12..16 {
            w.canh[i] = 2.85;
            w.canl[i] = 2.15;
        }
        assert_eq!(
            legacy_receive(&w, &l),
            [DOMINANT, DOMINANT, RECESSIVE, RECESSIVE]
        );
    }

    #[test]
    fn levels_validation() {
        assert!(PhyLevels::default().validate().is_ok());
        let bad = PhyLevels {
            th_rec: 1.0,
            ..PhyLevels::default()
        };
        assert!(bad.validate().is_err());
    }
}
