//! Implementations behind the `canmm` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use canmm_core::bus::{run_scenario_traced, FrameTrace, NodeKind, ScenarioReport};
use canmm_core::frame::{encode_frame, CanFrame, Field, WireBitstream};
use canmm_core::phy::AnalogWaveform;

use crate::output::{columns_csv, report_json, stages_csv, waveform_csv, write_atomic};
use crate::scenario::{FrameSpec, ScenarioFile};

/// Field-by-field listing of a frame's wire bits. Stuff bits are bracketed.
pub fn encode_listing(frame: &CanFrame) -> String {
    let ws = encode_frame(frame);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "frame        {:?} id={:#x} dlc={} payload={}",
        frame.variant(),
        frame.id(),
        frame.dlc(),
        hex::encode(frame.payload())
    );
    let _ = writeln!(s, "crc          {:#06x}", ws.crc);
    let _ = writeln!(
        s,
        "wire         {} bits ({} stuff)",
        ws.len(),
        ws.stuff_positions.len()
    );
    for field in Field::ALL {
        let span = ws.spans.get(field);
        let mut bits = String::new();
        for i in span.clone() {
            let c = if ws.bits[i] { '1' } else { '0' };
            if ws.is_stuff(i) {
                bits.push('[');
                bits.push(c);
                bits.push(']');
            } else {
                bits.push(c);
            }
        }
        let _ = writeln!(
            s,
            "{:<12} {:>3}..{:<3} {}",
            field.name(),
            span.start,
            span.end,
            bits
        );
    }
    let slots: Vec<String> = ws
        .slots
        .iter()
        .map(|sl| sl.wire_index.to_string())
        .collect();
    let _ = writeln!(s, "slots        {} [{}]", ws.slots.len(), slots.join(","));
    s
}

pub fn parse_frame_json(text: &str) -> Result<CanFrame> {
    let spec: FrameSpec = serde_json::from_str(text).context("invalid frame JSON")?;
    spec.to_frame()
}

pub struct RunOutcome {
    pub report: ScenarioReport,
    pub report_path: PathBuf,
    /// Violated expectations; empty on success.
    pub mismatches: Vec<String>,
}

fn per_frame_dumps(out: &Path, t: &FrameTrace, sample_rate: u64) -> Result<()> {
    write_atomic(
        &out.join(format!("frame_{:04}_tx.csv", t.index)),
        waveform_csv(&t.tx).as_bytes(),
    )?;
    write_atomic(
        &out.join(format!("frame_{:04}_bus.csv", t.index)),
        waveform_csv(&t.bus).as_bytes(),
    )?;
    for rx in &t.receivers {
        if let Some(st) = &rx.stages {
            write_atomic(
                &out.join(format!("frame_{:04}_{}_stages.csv", t.index, rx.node)),
                stages_csv(st, sample_rate).as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

/// Runs a scenario, writes `report.json` (and per-frame CSVs with
/// `dump_stages`), and checks the scenario's expectations.
pub fn run(
    file: &ScenarioFile,
    out: &Path,
    seed: Option<u64>,
    dump_stages: bool,
) -> Result<RunOutcome> {
    let scenario = file.build(seed)?;
    prepare_out(out)?;
    let mut dump_err = None;
    let report = run_scenario_traced(&scenario, |t| {
        if dump_stages && dump_err.is_none() {
            dump_err = per_frame_dumps(out, t, scenario.sample_rate).err();
        }
    })?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    let report_path = out.join("report.json");
    write_atomic(&report_path, report_json(&report)?.as_bytes())?;
    let mismatches = file.expect.check(&report);
    Ok(RunOutcome {
        report,
        report_path,
        mismatches,
    })
}

/// Writes the transmitted and received waveform of every frame.
pub fn export_wave(
    file: &ScenarioFile,
    out: &Path,
    seed: Option<u64>,
    dump_stages: bool,
) -> Result<Vec<PathBuf>> {
    let scenario = file.build(seed)?;
    prepare_out(out)?;
    let mut written = Vec::new();
    let mut err = None;
    run_scenario_traced(&scenario, |t| {
        if err.is_some() {
            return;
        }
        let res = (|| -> Result<()> {
            let tx = out.join(format!("frame_{:04}_tx.csv", t.index));
            let bus = out.join(format!("frame_{:04}_bus.csv", t.index));
            write_atomic(&tx, waveform_csv(&t.tx).as_bytes())?;
            write_atomic(&bus, waveform_csv(&t.bus).as_bytes())?;
            written.push(tx);
            written.push(bus);
            if dump_stages {
                for rx in &t.receivers {
                    if let Some(st) = &rx.stages {
                        let p = out.join(format!("frame_{:04}_{}_stages.csv", t.index, rx.node));
                        write_atomic(&p, stages_csv(st, scenario.sample_rate).as_bytes())?;
                        written.push(p);
                    }
                }
            }
            Ok(())
        })();
        err = res.err();
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    TxSignals,
    RxDecode,
    LegacyCompat,
    Latency,
}

impl Demo {
    pub const ALL: [Demo; 4] = [
        Demo::TxSignals,
        Demo::RxDecode,
        Demo::LegacyCompat,
        Demo::Latency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Demo::TxSignals => "tx_signals",
            Demo::RxDecode => "rx_decode",
            Demo::LegacyCompat => "legacy_compat",
            Demo::Latency => "latency",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }

    /// The shipped scenario file backing this demo.
    pub fn scenario_json(self) -> &'static str {
        match self {
            Demo::TxSignals => include_str!("../scenarios/tx_signals.json"),
            Demo::RxDecode => include_str!("../scenarios/rx_decode.json"),
            Demo::LegacyCompat => include_str!("../scenarios/legacy_compat.json"),
            Demo::Latency => include_str!("../scenarios/latency.json"),
        }
    }
}

/// Level of the wire bit that sample `i` belongs to, per the waveform's own bit grid.
fn bit_at(w: &AnalogWaveform, bits: &[bool], i: usize) -> Option<bool> {
    let spb = w.samples_per_bit();
    let first = *w.bit_boundaries.first()?;
    let k = i.checked_sub(first)? / spb;
    bits.get(k).copied()
}

/// Per-sample MAC value: the bit carried by the slot covering the sample, 0 elsewhere.
fn mac_per_sample(w: &AnalogWaveform, ws_slots: &canmm_core::SlotMap, mac: &[bool]) -> Vec<u8> {
    let mut v = vec![0u8; w.len()];
    for (slot, &b) in ws_slots.iter().zip(mac) {
        for i in w.bit_samples(slot.wire_range()) {
            v[i] = u8::from(b);
        }
    }
    v
}

fn b01(b: bool) -> u8 {
    u8::from(b)
}

fn demo_files(
    demo: Demo,
    t: &FrameTrace,
    wire: &WireBitstream,
    sample_rate: u64,
) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    match demo {
        Demo::TxSignals => {
            let w = &t.tx_plain;
            files.push((
                "bitstream.csv".into(),
                columns_csv("bit,stuff", w.len(), sample_rate, |i| {
                    let k = i / w.samples_per_bit();
                    format!("{},{}", b01(wire.bits[k]), b01(wire.is_stuff(k)))
                }),
            ));
            files.push((
                "differential.csv".into(),
                columns_csv("v_diff", w.len(), sample_rate, |i| {
                    format!("{:.7e}", w.canh[i] - w.canl[i])
                }),
            ));
            let mac = mac_per_sample(w, &wire.slots, &t.mac_bits);
            files.push((
                "mac_stream.csv".into(),
                columns_csv("mac", w.len(), sample_rate, |i| mac[i].to_string()),
            ));
            files.push(("canmm_lines.csv".into(), waveform_csv(&t.tx)));
        }
        Demo::RxDecode => {
            let rx = t
                .receivers
                .iter()
                .find(|r| r.kind == NodeKind::CanMmRx)
                .ok_or_else(|| anyhow!("demo scenario has no multiplexed-MAC receiver"))?;
            let stages = rx
                .stages
                .as_ref()
                .ok_or_else(|| anyhow!("receiver could not decode the frame"))?;
            let decoded = rx.decoded.as_ref().map_err(|e| anyhow!("{e}"))?;
            files.push(("rx_lines.csv".into(), waveform_csv(&t.bus)));
            files.push(("rx_stages.csv".into(), stages_csv(stages, sample_rate)));
            let mac = mac_per_sample(&t.bus, &decoded.slots, &stages.bits);
            files.push((
                "rx_mac_stream.csv".into(),
                columns_csv("mac", t.bus.len(), sample_rate, |i| mac[i].to_string()),
            ));
            files.push((
                "rx_bitstream.csv".into(),
                columns_csv("bit", t.bus.len(), sample_rate, |i| {
                    bit_at(&t.bus, &rx.wire_bits, i).map_or(1, b01).to_string()
                }),
            ));
        }
        Demo::LegacyCompat => {
            let rx = t
                .receivers
                .iter()
                .find(|r| r.kind == NodeKind::LegacyRx)
                .ok_or_else(|| anyhow!("demo scenario has no legacy receiver"))?;
            let mut s = String::from("bit_index,tx_bit,legacy_bit,match\n");
            for (k, (&tx, &lg)) in wire.bits.iter().zip(&rx.wire_bits).enumerate() {
                let _ = writeln!(s, "{k},{},{},{}", b01(tx), b01(lg), b01(tx == lg));
            }
            files.push(("legacy_bits.csv".into(), s));
            files.push((
                "legacy_differential.csv".into(),
                columns_csv("v_diff", t.bus.len(), sample_rate, |i| {
                    format!("{:.7e}", t.bus.canh[i] - t.bus.canl[i])
                }),
            ));
        }
        Demo::Latency => {
            let rx = t
                .receivers
                .iter()
                .find(|r| r.kind == NodeKind::CanMmRx)
                .ok_or_else(|| anyhow!("demo scenario has no multiplexed-MAC receiver"))?;
            let stages = rx
                .stages
                .as_ref()
                .ok_or_else(|| anyhow!("receiver could not decode the frame"))?;
            let tx_mac = mac_per_sample(&t.tx, &wire.slots, &t.mac_bits);
            let n = t.bus.len();
            files.push((
                "mac_timing.csv".into(),
                columns_csv("tx_mac,tx_detect,rx_detect", n, sample_rate, |i| {
                    format!(
                        "{},{},{}",
                        tx_mac.get(i).copied().unwrap_or(0),
                        t.tx_monitor.detect.get(i).map_or(0, |&d| b01(d)),
                        b01(stages.detect[i])
                    )
                }),
            ));
        }
    }
    Ok(files)
}

/// Runs a shipped demo scenario and writes the CSVs for its first frame plus
/// `report.json`. Returns the written paths.
pub fn demo(demo: Demo, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let file = ScenarioFile::from_json(demo.scenario_json())?;
    let scenario = file.build(seed)?;
    prepare_out(out)?;
    let mut first: Option<Vec<(String, String)>> = None;
    let mut legacy_bits = String::new();
    let mut err = None;
    let report = run_scenario_traced(&scenario, |t| {
        if first.is_none() {
            match demo_files(demo, t, &t.wire, scenario.sample_rate) {
                Ok(f) => first = Some(f),
                Err(e) => err = Some(e),
            }
        }
        if demo == Demo::LegacyCompat {
            if let Some(rx) = t.receivers.iter().find(|r| r.kind == NodeKind::LegacyRx) {
                let same = rx.wire_bits == t.wire.bits;
                let _ = writeln!(legacy_bits, "{},{},{}", t.index, t.wire.len(), b01(same));
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut files = first.ok_or_else(|| anyhow!("demo scenario produced no frames"))?;
    if demo == Demo::LegacyCompat {
        files.push((
            "legacy_frames.csv".into(),
            format!("frame_index,wire_bits,identical\n{legacy_bits}"),
        ));
    }
    files.push(("report.json".into(), report_json(&report)?));

    let mut written = Vec::new();
    for (name, contents) in files {
        let p = out.join(name);
        write_atomic(&p, contents.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_marks_stuff_bits() {
        let f = CanFrame::standard(0, &[]).unwrap();
        let s = encode_listing(&f);
        assert!(s.contains("wire         50 bits (6 stuff)"));
        assert!(s.contains("00000[1]"));
        assert!(s.contains("crc          0x0000"));
        assert!(s.contains("slots        0 []"));
    }

    #[test]
    fn demo_names_round_trip() {
        for d in Demo::ALL {
            assert_eq!(Demo::from_name(d.name()), Some(d));
            ScenarioFile::from_json(d.scenario_json())
                .unwrap()
                .build(None)
                .unwrap();
        }
        assert_eq!(Demo::from_name("nope"), None);
    }
}
