//! `qfluid` — config-driven experiments on wrapped Markov chains and their
//! fluid limits.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::Ctx;
use config::ExperimentConfig;

/// Environment variable consulted for the default output directory.
const OUT_ENV: &str = "QFLUID_OUT";

#[derive(Parser)]
#[command(name = "qfluid", version, about = "Wrapped Markov chains, fluid limits, and convergence diagnostics for tabular multi-agent Q-learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Precedence: this flag, then the config's
    /// `[output].dir`, then $QFLUID_OUT, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo replications (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate the game tensors and certify the learning assumptions.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Skip Doeblin certification (required for epsilon = 0 setups).
        #[arg(long)]
        no_doeblin: bool,
    },
    /// Solve the stationary distribution, certificate, and mixing curve.
    Stationary {
        #[command(flatten)]
        common: Common,
        /// Mixing-curve length (default: run.mixing_steps).
        #[arg(long)]
        n_max: Option<usize>,
        /// Also dump the dense wrapped kernel as CSV.
        #[arg(long)]
        dump_kernel: bool,
        /// Solve a raw row-stochastic matrix from a numeric CSV instead of
        /// the config's wrapped kernel.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Integrate the fluid ODE from the initial parameters.
    Ode {
        #[command(flatten)]
        common: Common,
        /// euler | rk4 (default: run.ode_method).
        #[arg(long)]
        method: Option<String>,
        /// Grid steps (default: run.ode_steps, or 1000).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Simulate one rescaled trajectory per configured scale.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run coupled live/frozen chains on a shared uniform stream.
    Couple {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo sup-error against the ODE across scales.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a log-log convergence rate to (scale, error) CSV rows.
    Rate {
        #[command(flatten)]
        common: Common,
        /// Input CSV (default: <out>/rate.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn build_ctx(common: &Common) -> Result<Ctx> {
    let (config, config_sha256) = ExperimentConfig::load(&common.config)?;
    let config_dir = common
        .config
        .parent()
        .map(|p| p.to_path_buf())
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let seed = common.seed.unwrap_or(config.run.seed);
    Ok(Ctx {
        config,
        config_path: common.config.clone(),
        config_dir,
        config_sha256,
        out_dir,
        seed,
    })
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Validate { common, .. }
        | Cmd::Stationary { common, .. }
        | Cmd::Ode { common, .. }
        | Cmd::Simulate { common }
        | Cmd::Couple { common }
        | Cmd::Compare { common }
        | Cmd::Rate { common, .. } => common,
    };
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("cannot configure worker pool")?;
    }
    let ctx = build_ctx(common)?;
    match cli.cmd {
        Cmd::Validate { no_doeblin, .. } => commands::cmd_validate(&ctx, no_doeblin),
        Cmd::Stationary {
            n_max,
            dump_kernel,
            matrix,
            ..
        } => commands::cmd_stationary(&ctx, n_max, dump_kernel, matrix),
        Cmd::Ode { method, steps, .. } => commands::cmd_ode(&ctx, method, steps),
        Cmd::Simulate { .. } => commands::cmd_simulate(&ctx),
        Cmd::Couple { .. } => commands::cmd_couple(&ctx),
        Cmd::Compare { .. } => commands::cmd_compare(&ctx),
        Cmd::Rate { input, .. } => commands::cmd_rate(&ctx, input),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::from(1)
        }
    }
}
