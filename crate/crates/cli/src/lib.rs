//! Command-line front end: configuration, figure presets, sweeps and
//! CSV/SVG output.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
mod transistor;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::{HbtOptions, Preset};
use crate::config::RunConfig;
use crate::output::OutputSet;

/// Bad input rather than a numerical failure; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_NUMERICAL
    }
}

#[derive(Debug, Parser)]
#[command(name = "blockade", version, about = "Photon blockade in a driven emitter-cavity system")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Photon-number cutoff
    #[arg(long, global = true, value_name = "N")]
    pub nmax: Option<usize>,
    /// Coupling g/2π in GHz
    #[arg(long, global = true, value_name = "GHZ", allow_hyphen_values = true)]
    pub g: Option<f64>,
    /// Cavity field decay κ/2π in GHz
    #[arg(long, global = true, value_name = "GHZ", allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Emitter decay γ/2π in GHz
    #[arg(long, global = true, value_name = "GHZ", allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Probe detuning (ω_p − ω₀)/g for g2tau and hbt
    #[arg(long, global = true, value_name = "X", allow_hyphen_values = true)]
    pub detuning: Option<f64>,
    /// Number of laser pulses for hbt
    #[arg(long, global = true, value_name = "N")]
    pub pulses: Option<u64>,
    /// Worker threads (0: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Also render SVG plots
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Steady-state intensity and g²(0) versus detuning
    Spectrum,
    /// Steady-state g²(τ) at one detuning
    G2tau,
    /// Synthesize a pulsed HBT measurement and analyse it
    Hbt {
        /// Analyse an existing click stream (.bin or .csv) instead
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Write the synthesized click stream to clicks.bin
        #[arg(long)]
        stream: bool,
    },
    /// Full-model pulsed ḡ₀² versus detuning
    G2map,
    /// Figure presets
    Reproduce {
        #[arg(value_enum)]
        preset: Preset,
    },
    /// Print the effective configuration as TOML
    ShowConfig,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(x) = &self.out {
            cfg.output = x.clone();
        }
        if let Some(x) = self.seed {
            cfg.seed = x;
        }
        if let Some(x) = self.nmax {
            cfg.system.n_max = x;
        }
        if let Some(x) = self.g {
            cfg.system.g_ghz = x;
        }
        if let Some(x) = self.kappa {
            cfg.system.kappa_ghz = x;
        }
        if let Some(x) = self.gamma {
            cfg.system.gamma_ghz = x;
        }
        if let Some(x) = self.detuning {
            cfg.sweep.detuning = x;
        }
        if let Some(x) = self.pulses {
            cfg.detection.pulses = x;
        }
        if let Some(x) = self.workers {
            cfg.workers = x;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one command on a worker pool of the configured size. On failure every
/// file the command wrote is removed.
pub fn execute(cfg: &RunConfig, command: &Command, plot: bool) -> Result<Vec<String>> {
    if let Command::ShowConfig = command {
        return Ok(vec![cfg.to_toml()]);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().context("worker pool")?;
    let mut out = OutputSet::new(&cfg.output, cfg.hash())?;
    let result = pool.install(|| match command {
        Command::Spectrum => commands::spectrum(cfg, &mut out, plot),
        Command::G2tau => commands::g2tau(cfg, &mut out, plot),
        Command::Hbt { input, stream } => {
            commands::hbt(cfg, &mut out, plot, HbtOptions { input: input.as_deref(), write_stream: *stream })
        }
        Command::G2map => commands::g2map(cfg, &mut out, plot),
        Command::Reproduce { preset } => commands::reproduce(cfg, &mut out, plot, *preset),
        Command::ShowConfig => unreachable!(),
    });
    match result {
        Ok(mut lines) => {
            lines.extend(out.written().iter().map(|p| format!("wrote {}", p.display())));
            Ok(lines)
        }
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Entry point shared by the binary and the tests: returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let outcome = cli.overrides.resolve().and_then(|cfg| execute(&cfg, &cli.command, cli.overrides.plot));
    match outcome {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
