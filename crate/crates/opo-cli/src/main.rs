//! Command-line front end for the cavity, lock, and squeezing simulators.
//!
//! Subcommands map to the library crates: `scan-cavity` and
//! `compare-error-signals` tabulate the static error-signal landscape,
//! `lock` and `scan-pump` run the closed-loop plant, and `state` synthesizes
//! and reconstructs a homodyne trace. Every run is driven by one JSON
//! configuration (built-in defaults when `--config` is omitted) and a single
//! RNG seed, and every output file embeds a hash of the physics
//! configuration, so identical (config, seed) pairs give byte-identical
//! artifacts.
//!
//! Exit codes: 0 success, 2 configuration error (including above-threshold
//! pump coupling), 3 lock failure, 4 insufficient data for tomography,
//! 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("lock acquisition failed: {0}")]
    Lock(lock_sim::LockError),
    #[error("tomography: {0}")]
    Tomography(#[from] squeezed_states::TomographyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lock(_) => 3,
            CliError::Tomography(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<lock_sim::LockError> for CliError {
    fn from(e: lock_sim::LockError) -> Self {
        match e {
            lock_sim::LockError::LockFailed { .. } => CliError::Lock(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<error_signals::SignalError> for CliError {
    fn from(e: error_signals::SignalError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "opo",
    about = "Seeded, pumped OPO cavity simulator: scans, stabilization loops, squeezed states"
)]
struct Cli {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replaces the RNG seed from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Replaces the output directory from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the cavity detuning and tabulate error signals and powers.
    ScanCavity {
        /// Scan start, round-trip phase in rad.
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        phi_start: f64,
        /// Scan end, round-trip phase in rad.
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        phi_end: f64,
        /// Grid points across the scan.
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Acquire both stabilization loops against the noisy plant and report
    /// the residual intensity noise.
    Lock,
    /// Ramp the pump phase under frequency lock and record the tracked dip.
    ScanPump {
        /// Pump phase ramp rate in rad/s.
        #[arg(long, default_value_t = std::f64::consts::TAU, allow_hyphen_values = true)]
        rate: f64,
        /// Ramp duration in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
    },
    /// Synthesize a homodyne trace of the output state and reconstruct it.
    State {
        /// Homodyne samples along one full local-oscillator turn.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Tabulate the reflected-power and pump-modulation error signals
    /// against pump phase at the tracked lock point.
    CompareErrorSignals {
        /// Grid points over one full pump-phase turn.
        #[arg(long, default_value_t = 181)]
        points: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.lock.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let sha = cfg.content_hash();
    std::fs::create_dir_all(&cfg.output_dir)?;
    match cli.command {
        Command::ScanCavity { phi_start, phi_end, points } => {
            commands::scan_cavity(&cfg, &sha, phi_start, phi_end, points)
        }
        Command::Lock => commands::lock(&cfg, &sha),
        Command::ScanPump { rate, duration } => commands::scan_pump(&cfg, &sha, rate, duration),
        Command::State { samples } => commands::state(&cfg, &sha, samples),
        Command::CompareErrorSignals { points } => {
            commands::compare_error_signals(&cfg, &sha, points)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
