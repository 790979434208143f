//! `defensim` command-line tool.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime failure.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use defensim_core::debugger::SessionManager;
use defensim_core::decision::{validate_kernel, ModelKernel};
use defensim_core::experiment::{parse_config, parse_sweep_config, run_experiment, run_sweep, ExperimentError, RunOptions};
use defensim_core::sysid::{fit_empirical, fit_gmm, ingest_traces, Channel, TraceFormat};
use serde_json::json;

#[derive(Parser)]
#[command(name = "defensim", version, about = "Security decision models: experiments, fitting and the episode debugger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunFlags {
    /// Comma-separated seeds replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory replacing the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for seeds (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Run a non-default model/algorithm pairing without a warning.
    #[arg(long)]
    override_pairing: bool,
    /// Record wall-clock seconds in the curves (output is then not reproducible).
    #[arg(long)]
    wall_clock: bool,
}

impl RunFlags {
    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            override_pairing: self.override_pairing,
            record_wall_clock: self.wall_clock,
            seeds: self.seeds.clone(),
            out: self.out.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Severe,
    Warning,
    Logins,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a misspecification sweep config.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Fit observation models to a labeled trace file (JSON lines or CSV).
    Fit {
        traces: PathBuf,
        #[arg(long, value_enum, default_value = "severe")]
        channel: ChannelArg,
        /// Mixture components per label.
        #[arg(long, default_value_t = 1)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the fit here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a kernel JSON document.
    Validate { kernel: PathBuf },
    /// Start the debugger HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Idle minutes before a session is dropped.
        #[arg(long, default_value_t = 30)]
        ttl_minutes: u64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, flags } => {
            let cfg = parse_config(&read(&config)?).map_err(|e| Failure::Config(e.to_string()))?;
            let summary = run_experiment(&cfg, &flags.options())?;
            println!("wrote {} seed curves to {}", summary.per_seed.len(), summary.output_dir.display());
            for (metric, v) in &summary.last_mean {
                println!("  {metric}: {v}");
            }
        }
        Command::Sweep { config, flags } => {
            let cfg = parse_sweep_config(&read(&config)?).map_err(|e| Failure::Config(e.to_string()))?;
            let summary = run_sweep(&cfg, &flags.options())?;
            println!("wrote {} sweep rows to {}", summary.rows.len(), summary.output_dir.display());
            println!("  spearman(misspecification, simulated value): {}", summary.spearman_sim);
            println!("  relative spread of true value: {}", summary.truth_spread);
        }
        Command::Fit { traces, channel, components, seed, out } => {
            let channel = match channel {
                ChannelArg::Severe => Channel::Severe,
                ChannelArg::Warning => Channel::Warning,
                ChannelArg::Logins => Channel::Logins,
            };
            let rt = |e: defensim_core::sysid::SysidError| Failure::Runtime(e.to_string());
            let trace = ingest_traces(&traces, TraceFormat::from_path(&traces)).map_err(|e| Failure::Config(e.to_string()))?;
            let mut fits = serde_json::Map::new();
            for label in [0u8, 1] {
                let values: Vec<f64> = trace.channel_values(channel, label).into_iter().map(|v| v as f64).collect();
                let gmm = fit_gmm(&values, components, seed, 500, 1e-8).map_err(rt)?;
                let empirical = fit_empirical(&trace, channel, label).map_err(rt)?;
                fits.insert(format!("label_{label}"), json!({"gmm": gmm, "empirical": empirical}));
            }
            let text = serde_json::to_string_pretty(&fits).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
        }
        Command::Validate { kernel } => {
            let k = ModelKernel::from_json(&read(&kernel)?).map_err(|e| Failure::Config(e.to_string()))?;
            let report = validate_kernel(&k);
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?);
            if !report.is_valid() {
                return Err(Failure::Config(format!("{} violations", report.violations.len())));
            }
        }
        Command::Serve { addr, ttl_minutes } => {
            let manager = Arc::new(SessionManager::new(Duration::from_secs(ttl_minutes * 60)));
            defensim_server::serve(addr, manager).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
