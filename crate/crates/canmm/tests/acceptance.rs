//! End-to-end acceptance checks. Runs with a custom harness so every
//! criterion prints exactly one PASS/FAIL line.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use canmm::commands::{self, Demo};
use canmm_core::bus::{
    random_frames, run_scenario, run_scenario_traced, Coupling, NodeKind, NoiseSource, Scenario,
    ScenarioReport, VerdictReport,
};
use canmm_core::demodulator::{bandpass, Biquad};
use canmm_core::frame::{encode_frame, CanFrame, FrameVariant};
use canmm_core::mac::{cmac_aes128, tag_for, MacKey};
use canmm_core::phy::legacy_receive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const KEY: [u8; 16] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
const FS: u64 = 50_000_000;
const FC: f64 = 5.0e6;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn hybrid(frames: Vec<CanFrame>, seed: u64) -> Scenario {
    Scenario::hybrid(MacKey::new(KEY), frames, seed)
}

fn run(s: &Scenario) -> Result<ScenarioReport, String> {
    run_scenario(s).map_err(|e| e.to_string())
}

fn node_kind(r: &ScenarioReport, kind: NodeKind) -> &canmm_core::bus::NodeSummary {
    r.nodes
        .iter()
        .find(|n| n.kind == Some(kind))
        .expect("node present")
}

// ---- AC1 / AC2 ----

const CORPUS: usize = 1000;
const CORPUS_SEED: u64 = 0x0AC1;

fn ac1_round_trip() -> Outcome {
    let t0 = Instant::now();
    let s = hybrid(random_frames(CORPUS_SEED, CORPUS), CORPUS_SEED);
    let mut legacy_exact = 0usize;
    let report = run_scenario_traced(&s, |t| {
        let lg = t
            .receivers
            .iter()
            .find(|r| r.kind == NodeKind::LegacyRx)
            .unwrap();
        let ok = lg.wire_bits == t.wire.bits
            && lg
                .decoded
                .as_ref()
                .is_ok_and(|d| d.frame == s.frames[t.index]);
        legacy_exact += usize::from(ok);
    })
    .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();

    let mut tags_exact = 0usize;
    for f in &report.frames {
        let rx = f
            .receivers
            .iter()
            .find(|r| r.kind == NodeKind::CanMmRx)
            .unwrap();
        let mac = rx.mac.as_ref().ok_or("receiver produced no MAC result")?;
        if mac.recovered_tag == f.tag && mac.bit_errors == 0 {
            tags_exact += 1;
        }
    }
    let rx = node_kind(&report, NodeKind::CanMmRx);
    ensure(legacy_exact == CORPUS, || {
        format!("legacy exact {legacy_exact}/{CORPUS}")
    })?;
    ensure(tags_exact == CORPUS, || {
        format!("tags recovered {tags_exact}/{CORPUS}")
    })?;
    ensure(rx.mac_verified == CORPUS, || {
        format!("tags verified {}/{CORPUS}", rx.mac_verified)
    })?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{CORPUS} frames: legacy {legacy_exact}, tags recovered {tags_exact}, verified {}, {:.1} s",
        rx.mac_verified,
        elapsed.as_secs_f64()
    ))
}

fn ac2_back_compat() -> Outcome {
    let s = hybrid(random_frames(CORPUS_SEED, CORPUS), CORPUS_SEED);
    let mut mismatches = 0usize;
    let mut bits = 0usize;
    run_scenario_traced(&s, |t| {
        let plain = legacy_receive(&t.tx_plain, &s.levels);
        let modulated = legacy_receive(&t.tx, &s.levels);
        bits += plain.len();
        mismatches += plain.iter().zip(&modulated).filter(|(a, b)| a != b).count();
        mismatches += plain.len().abs_diff(modulated.len());
    })
    .map_err(|e| e.to_string())?;
    ensure(mismatches == 0, || format!("{mismatches} mismatching bits"))?;
    Ok(format!("{CORPUS} frames, {bits} wire bits, 0 mismatches"))
}

// ---- AC3 ----

const NIST_KEY: &str = "2b7e151628aed2a6abf7158809cf4f3c";
const NIST_MSG: &str = "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51\
30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710";
const NIST_VECTORS: [(usize, &str); 4] = [
    (0, "bb1d6929e95937287fa37d129b756746"),
    (16, "070a16b46b4d4144f79bdd9dd04a287c"),
    (40, "dfa66747de9ae63030ca32611497c827"),
    (64, "51f0bebf7e3b9d92fc49741779363cfe"),
];

fn ac3_cmac() -> Outcome {
    let key = MacKey::new(hex::decode(NIST_KEY).unwrap().try_into().unwrap());
    let msg = hex::decode(NIST_MSG).unwrap();
    for (len, want) in NIST_VECTORS {
        let got = hex::encode(cmac_aes128(&key, &msg[..len]));
        ensure(got == want, || format!("Mlen={len}: {got} != {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200;
    for _ in 0..n {
        let frame = random_frame(&mut rng);
        let counter: u32 = rng.gen();
        let mut m = frame.id().to_be_bytes().to_vec();
        m.extend_from_slice(&counter.to_be_bytes());
        m.push(frame.dlc());
        m.extend_from_slice(frame.payload());
        let full = cmac_aes128(&key, &m);
        let tag = tag_for(&key, &frame, counter);
        ensure(tag.0[..] == full[..4], || {
            format!(
                "tag {} is not a prefix of {}",
                hex::encode(tag.0),
                hex::encode(full)
            )
        })?;
    }
    Ok(format!(
        "{} vectors exact, {n} truncations prefix-exact",
        NIST_VECTORS.len()
    ))
}

// ---- AC4 ----

/// Bit-serial CRC-15 register as in the CAN standard.
fn oracle_crc(bits: &[bool]) -> u16 {
    let mut reg: u16 = 0;
    for &b in bits {
        let nxt = b ^ (reg & 0x4000 != 0);
        reg = (reg << 1) & 0x7fff;
        if nxt {
            reg ^= 0x4599;
        }
    }
    reg
}

fn oracle_stuff(bits: &[bool]) -> Vec<bool> {
    let mut out = Vec::new();
    let mut last = None;
    let mut run = 0;
    for &b in bits {
        out.push(b);
        if Some(b) == last {
            run += 1;
        } else {
            last = Some(b);
            run = 1;
        }
        if run == 5 {
            out.push(!b);
            last = Some(!b);
            run = 1;
        }
    }
    out
}

fn push_uint(v: &mut Vec<bool>, x: u32, width: u32) {
    for i in (0..width).rev() {
        v.push((x >> i) & 1 == 1);
    }
}

fn oracle_wire(frame: &CanFrame) -> Vec<bool> {
    let mut v = vec![false];
    match frame.variant() {
        FrameVariant::Can20A => {
            push_uint(&mut v, frame.id(), 11);
            v.extend([false, false, false]);
        }
        FrameVariant::Can20B => {
            push_uint(&mut v, frame.id() >> 18, 11);
            v.extend([true, true]);
            push_uint(&mut v, frame.id() & 0x3ffff, 18);
            v.extend([false, false, false]);
        }
    }
    push_uint(&mut v, u32::from(frame.dlc()), 4);
    for &byte in frame.payload() {
        push_uint(&mut v, u32::from(byte), 8);
    }
    let crc = oracle_crc(&v);
    push_uint(&mut v, u32::from(crc), 15);
    let mut wire = oracle_stuff(&v);
    wire.extend([true, false, true]);
    wire.extend([true; 7]);
    wire
}

fn random_frame(rng: &mut ChaCha8Rng) -> CanFrame {
    let dlc = rng.gen_range(0..=8usize);
    let payload: Vec<u8> = (0..dlc).map(|_| rng.gen()).collect();
    if rng.gen_bool(0.5) {
        CanFrame::standard(rng.gen_range(0..0x800), &payload).unwrap()
    } else {
        CanFrame::extended(rng.gen_range(0..0x2000_0000), &payload).unwrap()
    }
}

fn ac4_codec_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2000;
    let mut mismatches = 0;
    for _ in 0..n {
        let frame = random_frame(&mut rng);
        if encode_frame(&frame).bits != oracle_wire(&frame) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || {
        format!("{mismatches}/{n} frames differ from oracle")
    })?;
    Ok(format!("{n} frames, 0 mismatches"))
}

// ---- AC5 ----

/// |H| of the constant-peak band-pass built straight from its defining formulas.
fn closed_form_gain(freq: f64, fc: f64, q: f64) -> f64 {
    let w0 = 2.0 * PI * fc / FS as f64;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2, a1, a2) = (
        alpha / a0,
        -alpha / a0,
        -2.0 * w0.cos() / a0,
        (1.0 - alpha) / a0,
    );
    let w = 2.0 * PI * freq / FS as f64;
    let num = ((b0 + b2 * (2.0 * w).cos()).powi(2) + (b2 * (2.0 * w).sin()).powi(2)).sqrt();
    let den = ((1.0 + a1 * w.cos() + a2 * (2.0 * w).cos()).powi(2)
        + (a1 * w.sin() + a2 * (2.0 * w).sin()).powi(2))
    .sqrt();
    num / den
}

/// Steady-state output/input peak ratio for a cosine tone.
fn measured_gain(freq: f64, q: f64) -> f64 {
    let n = 200_000;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * PI * freq * i as f64 / FS as f64 + 0.3).cos())
        .collect();
    let y = bandpass(&x, FS, FC, q).unwrap();
    let tail = 3 * n / 4;
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    peak(&y[tail..]) / peak(&x[tail..])
}

fn db(g: f64) -> f64 {
    20.0 * g.max(1e-12).log10()
}

fn ac5_filter() -> Outcome {
    let q = canmm_core::DecoderConfig::default().q_factor;
    let bq = Biquad::bandpass(FS, FC, q).map_err(|e| e.to_string())?;
    let w0 = 2.0 * PI * FC / FS as f64;
    let alpha = w0.sin() / (2.0 * q);
    ensure((bq.b0 - alpha / (1.0 + alpha)).abs() < 1e-12, || {
        "b0 differs from closed form".into()
    })?;

    let mut parts = Vec::new();
    for (label, f) in [("fc", FC), ("fc/10", FC / 10.0), ("10fc", 10.0 * FC)] {
        let g_cf = db(closed_form_gain(f, FC, q));
        let g_m = db(measured_gain(f, q));
        let in_spec = |g: f64| if f == FC { g.abs() <= 1.0 } else { g <= -20.0 };
        ensure(in_spec(g_cf), || {
            format!("{label}: closed form {g_cf:.2} dB")
        })?;
        ensure(in_spec(g_m), || format!("{label}: measured {g_m:.2} dB"))?;
        ensure(
            (g_m - g_cf).abs() < 0.5 || (g_m < -60.0 && g_cf < -60.0),
            || format!("{label}: measured {g_m:.2} dB vs closed form {g_cf:.2} dB"),
        )?;
        parts.push(format!("{label} {g_m:.1} dB"));
    }
    Ok(parts.join(", "))
}

// ---- AC6 ----

const SWEEP_HZ: [f64; 7] = [1e3, 2e3, 5e3, 10e3, 20e3, 50e3, 100e3];

fn ac6_noise() -> Outcome {
    let frames = random_frames(6, 200);
    for (k, f) in SWEEP_HZ.into_iter().enumerate() {
        let mut s = hybrid(frames.clone(), 600 + k as u64);
        s.noise
            .push(NoiseSource::sine(f, 0.15, Coupling::CommonMode));
        let r = run(&s)?;
        let rx = node_kind(&r, NodeKind::CanMmRx);
        let lg = node_kind(&r, NodeKind::LegacyRx);
        ensure(rx.mac_bit_errors == 0, || {
            format!("{f} Hz: {} MAC bit errors", rx.mac_bit_errors)
        })?;
        ensure(rx.mac_verified == 200, || {
            format!("{f} Hz: {} tags verified", rx.mac_verified)
        })?;
        ensure(lg.frame_errors + rx.frame_errors == 0, || {
            format!(
                "{f} Hz: frame errors legacy {} mac {}",
                lg.frame_errors, rx.frame_errors
            )
        })?;
    }
    Ok(format!(
        "{} tones 1-100 kHz x 200 frames: BER 0, FER 0",
        SWEEP_HZ.len()
    ))
}

// ---- AC7 ----

fn ac7_dos() -> Outcome {
    let mut s = hybrid(random_frames(7, 100), 7);
    s.noise.push(NoiseSource::attacker_carrier(FC, 0.15));
    let r = run(&s)?;
    let rx = node_kind(&r, NodeKind::CanMmRx);
    let lg = node_kind(&r, NodeKind::LegacyRx);
    ensure(rx.mac_failures >= 1, || {
        "no MAC failures under attack".into()
    })?;
    ensure(lg.frame_errors == 0, || {
        format!("{} legacy frame errors", lg.frame_errors)
    })?;
    Ok(format!(
        "100 frames: {} MAC failures, 0 legacy errors",
        rx.mac_failures
    ))
}

// ---- AC8 ----

fn ac8_latency() -> Outcome {
    let mut s = hybrid(random_frames(8, 50), 8);
    s.line_delay = 400e-9;
    let r = run(&s)?;
    let tol = 1.0 / FS as f64;
    let mut seen = Vec::new();
    for f in &r.frames {
        for rx in &f.receivers {
            let Some(mac) = &rx.mac else { continue };
            let lat = mac
                .latency_s
                .ok_or_else(|| format!("frame {}: no latency", f.index))?;
            ensure((lat - 400e-9).abs() <= tol + 1e-15, || {
                format!("frame {}: latency {:.1} ns", f.index, lat * 1e9)
            })?;
            seen.push(lat);
        }
    }
    ensure(!seen.is_empty(), || "no latency measurements".into())?;
    let (lo, hi) = seen
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(format!(
        "{} frames: {:.0}-{:.0} ns",
        seen.len(),
        lo * 1e9,
        hi * 1e9
    ))
}

// ---- AC9 ----

fn ac9_replay() -> Outcome {
    let mut s = hybrid(random_frames(9, 100), 9);
    s.replay = true;
    let r = run(&s)?;
    let rejected = r
        .replays
        .iter()
        .filter(|p| p.verdict == VerdictReport::Replay)
        .count();
    ensure(r.replays.len() == 100, || {
        format!("{} replay attempts", r.replays.len())
    })?;
    ensure(rejected == 100, || {
        format!("{rejected}/100 rejected as replay")
    })?;
    Ok("100/100 replays rejected as Replay".into())
}

// ---- AC10 ----

fn ac10_determinism() -> Outcome {
    let mut checked = 0;
    for demo in Demo::ALL {
        let mut reports = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            commands::demo(demo, dir.path(), Some(1234)).map_err(|e| format!("{e:#}"))?;
            reports.push(std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?);
        }
        ensure(reports[0] == reports[1], || {
            format!("{} reports differ", demo.name())
        })?;
        checked += 1;
    }
    Ok(format!("{checked} demos byte-identical across runs"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 end-to-end round trip", ac1_round_trip),
        ("AC2 legacy back-compatibility", ac2_back_compat),
        ("AC3 CMAC known answers", ac3_cmac),
        ("AC4 CRC/stuffing oracle", ac4_codec_oracle),
        ("AC5 filter selectivity", ac5_filter),
        ("AC6 kHz noise robustness", ac6_noise),
        ("AC7 DoS carrier", ac7_dos),
        ("AC8 MAC latency", ac8_latency),
        ("AC9 replay protection", ac9_replay),
        ("AC10 determinism", ac10_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
