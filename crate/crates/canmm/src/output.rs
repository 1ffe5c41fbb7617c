//! File output: report JSON, waveform and stage CSVs. Every file is written
//! to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use canmm_core::bus::ScenarioReport;
use canmm_core::demodulator::DemodStages;
use canmm_core::phy::AnalogWaveform;

pub const WAVEFORM_HEADER: &str = "t_seconds,v_canh,v_canl";
pub const STAGE_HEADER: &str = "t_seconds,v_canh,v_canl,detect";

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn report_json(report: &ScenarioReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn time(i: usize, sample_rate: u64) -> f64 {
    i as f64 / sample_rate as f64
}

/// `t_seconds,v_canh,v_canl`, one row per sample.
pub fn waveform_csv(w: &AnalogWaveform) -> String {
    let mut s = String::with_capacity(w.len() * 48);
    s.push_str(WAVEFORM_HEADER);
    s.push('\n');
    for (i, (h, l)) in w.canh.iter().zip(&w.canl).enumerate() {
        let _ = writeln!(s, "{:.9e},{:.7e},{:.7e}", time(i, w.sample_rate), h, l);
    }
    s
}

/// Filtered lines and the conjunction stream.
pub fn stages_csv(stages: &DemodStages, sample_rate: u64) -> String {
    let mut s = String::with_capacity(stages.detect.len() * 50);
    s.push_str(STAGE_HEADER);
    s.push('\n');
    for i in 0..stages.detect.len() {
        let _ = writeln!(
            s,
            "{:.9e},{:.7e},{:.7e},{}",
            time(i, sample_rate),
            stages.filtered_h[i],
            stages.filtered_l[i],
            u8::from(stages.detect[i])
        );
    }
    s
}

/// Arbitrary columns sampled per waveform sample.
pub fn columns_csv(
    header: &str,
    rows: usize,
    sample_rate: u64,
    row: impl Fn(usize) -> String,
) -> String {
    let mut s = String::with_capacity(rows * 32);
    s.push_str("t_seconds,");
    s.push_str(header);
    s.push('\n');
    for i in 0..rows {
        let _ = writeln!(s, "{:.9e},{}", time(i, sample_rate), row(i));
    }
    s
}
