use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use canmm::commands::{self, Demo};
use canmm::scenario::ScenarioFile;
use clap::{Parser, Subcommand};

/// Multiplexed-MAC CAN bus simulator.
#[derive(Parser)]
#[command(name = "canmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the wire encoding of one frame given as JSON (or @file).
    Encode {
        /// e.g. {"variant":"can20a","id":291,"payload":"0123"}
        frame: String,
    },
    /// Run a scenario file and write report.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-frame waveforms and receiver stages.
        #[arg(long)]
        dump_stages: bool,
    },
    /// Run one of the built-in demos: tx_signals, rx_decode, legacy_compat, latency.
    Demo {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write per-frame transmitted and bus waveforms of a scenario as CSV.
    ExportWave {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dump_stages: bool,
    },
}

fn read_arg(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("cannot read {path}")),
        None => Ok(arg.to_owned()),
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Encode { frame } => {
            let frame = commands::parse_frame_json(&read_arg(&frame)?)?;
            print!("{}", commands::encode_listing(&frame));
        }
        Command::Run {
            scenario,
            out,
            seed,
            dump_stages,
        } => {
            let file = ScenarioFile::load(&scenario)?;
            let outcome = commands::run(&file, &out, seed, dump_stages)?;
            println!("wrote {}", outcome.report_path.display());
            if !outcome.mismatches.is_empty() {
                for m in &outcome.mismatches {
                    eprintln!("expectation failed: {m}");
                }
                return Ok(ExitCode::from(1));
            }
        }
        Command::Demo { name, out, seed } => {
            let demo = Demo::from_name(&name).with_context(|| {
                let names: Vec<_> = Demo::ALL.iter().map(|d| d.name()).collect();
                format!(
                    "unknown demo '{name}' (expected one of {})",
                    names.join(", ")
                )
            })?;
            for p in commands::demo(demo, &out, seed)? {
                println!("wrote {}", p.display());
            }
        }
        Command::ExportWave {
            scenario,
            out,
            seed,
            dump_stages,
        } => {
            let file = ScenarioFile::load(&scenario)?;
            let written = commands::export_wave(&file, &out, seed, dump_stages)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
