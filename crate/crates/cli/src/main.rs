//! Command-line harness: `run` executes an experiment preset and writes
//! CSV/JSON results; `check` executes the full invariant and oracle suite
//! and exits nonzero on any failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use thpmimo_core::checks;
use thpmimo_core::harness::{run_preset, Algorithm, ExperimentSpec, Preset};

#[derive(Parser)]
#[command(
    name = "thpmimo",
    about = "Nonlinear THP hybrid transceiver design and Monte-Carlo evaluation for multiuser mmWave MIMO downlinks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and write CSV/JSON outputs.
    Run(RunArgs),
    /// Run the invariant/oracle suite; nonzero exit on any failure.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment preset: fig3|fig4|fig5|fig7|fig8|fig9|desk|paper.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Comma-separated SNR grid in dB, e.g. 0,10,20.
    #[arg(long, value_delimiter = ',')]
    snr_db: Option<Vec<f64>>,
    /// Number of Monte-Carlo seeds (0..n).
    #[arg(long)]
    seeds: Option<u64>,
    /// QAM symbols per evaluation point.
    #[arg(long)]
    symbols: Option<usize>,
    /// Comma-separated algorithm list, e.g. nonlinear-joint,linear-joint,zf,fd,tts.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Comma-separated CSI delays in milliseconds for the delay studies.
    #[arg(long, value_delimiter = ',')]
    delay_ms: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON config file; its keys override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Trim Monte-Carlo budgets for a faster (non-release) pass.
    #[arg(long)]
    quick: bool,
}

/// Keys accepted from `--config`; every present key overrides the
/// corresponding flag or preset default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOverrides {
    snr_db: Option<Vec<f64>>,
    seeds: Option<u64>,
    seed_list: Option<Vec<u64>>,
    symbols: Option<usize>,
    algos: Option<Vec<String>>,
    delay_ms: Option<Vec<f64>>,
    out_dir: Option<PathBuf>,
    frames: Option<usize>,
    slots_per_frame: Option<usize>,
    slot_duration: Option<f64>,
    solver_tolerance: Option<f64>,
    solver_max_iterations: Option<usize>,
    system: Option<thpmimo_core::SystemConfig>,
    channel: Option<thpmimo_core::ChannelModel>,
}

fn parse_algorithms(names: &[String]) -> Result<Vec<Algorithm>, String> {
    names
        .iter()
        .map(|n| Algorithm::from_str(n).map_err(|e| e.to_string()))
        .collect()
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec, String> {
    let preset = Preset::from_str(&args.preset).map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::preset(preset);
    spec.out_dir = args.out.clone();
    if let Some(grid) = &args.snr_db {
        spec.snr_db = grid.clone();
    }
    if let Some(n) = args.seeds {
        spec.seeds = (0..n).collect();
    }
    if let Some(s) = args.symbols {
        spec.symbols = s;
    }
    if let Some(names) = &args.algos {
        spec.algorithms = parse_algorithms(names)?;
    }
    if let Some(delays) = &args.delay_ms {
        spec.delays_ms = delays.clone();
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let over: FileOverrides =
            serde_json::from_str(&text).map_err(|e| format!("bad config file: {e}"))?;
        if let Some(v) = over.snr_db {
            spec.snr_db = v;
        }
        if let Some(n) = over.seeds {
            spec.seeds = (0..n).collect();
        }
        if let Some(v) = over.seed_list {
            spec.seeds = v;
        }
        if let Some(v) = over.symbols {
            spec.symbols = v;
        }
        if let Some(v) = over.algos {
            spec.algorithms = parse_algorithms(&v)?;
        }
        if let Some(v) = over.delay_ms {
            spec.delays_ms = v;
        }
        if let Some(v) = over.out_dir {
            spec.out_dir = v;
        }
        if let Some(v) = over.frames {
            spec.frames = v;
        }
        if let Some(v) = over.slots_per_frame {
            spec.slots_per_frame = v;
        }
        if let Some(v) = over.slot_duration {
            spec.slot_duration = v;
        }
        if let Some(v) = over.solver_tolerance {
            spec.solver_tolerance = v;
        }
        if let Some(v) = over.solver_max_iterations {
            spec.solver_max_iterations = v;
        }
        if let Some(v) = over.system {
            spec.system = v;
        }
        if let Some(v) = over.channel {
            spec.channel = v;
        }
    }
    Ok(spec)
}

fn run(args: &RunArgs) -> Result<(), String> {
    let spec = build_spec(args)?;
    spec.validate().map_err(|e| e.to_string())?;
    println!(
        "preset {} | snr {:?} dB | {} seeds | {} symbols/point | hash {}",
        spec.preset,
        spec.snr_db,
        spec.seeds.len(),
        spec.symbols,
        spec.content_hash()
    );
    let report = run_preset(&spec).map_err(|e| e.to_string())?;
    if !report.cells.is_empty() {
        println!("{:<20} {:>7} {:>12} {:>12}", "algorithm", "snr_db", "mean_mse", "mean_ser");
        let mut combos: Vec<(Algorithm, f64)> = report
            .cells
            .iter()
            .map(|c| (c.algorithm, c.snr_db))
            .collect();
        combos.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then(a.0.name().cmp(b.0.name()))
        });
        combos.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        for (algo, snr) in combos {
            println!(
                "{:<20} {:>7} {:>12.6} {:>12.6}",
                algo.name(),
                snr,
                report.mean_mse(algo, snr),
                report.mean_ser(algo, snr)
            );
        }
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(message) => {
                eprintln!("error: {message}");
                ExitCode::FAILURE
            }
        },
        Command::Check(args) => {
            let outcomes = checks::run_all(args.quick);
            let mut failures = 0;
            for c in &outcomes {
                println!(
                    "[{}] {} - {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.details
                );
                if !c.passed {
                    failures += 1;
                }
            }
            println!(
                "{}/{} checks passed",
                outcomes.len() - failures,
                outcomes.len()
            );
            if failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
