//! `brca` — config-driven experiment runner for the simulation laboratory.
//!
//! Exit codes: 0 = completed and passed, 2 = ran correctly but a verdict
//! failed, 1 = configuration or runtime error.

mod commands;
mod config;
mod model;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;
use output::OutputDir;

#[derive(Parser)]
#[command(
    name = "brca",
    about = "Simulation and Monte Carlo verification of function-valued random-coefficient AR(1) processes",
    version
)]
struct Cli {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config file and the BRCA_SEED variable.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread cap (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo diagnostics for the contraction conditions.
    Conditions {
        /// Moment exponent p.
        #[arg(long)]
        p: Option<f64>,
        /// Monte Carlo draws.
        #[arg(long)]
        n_mc: Option<usize>,
    },
    /// Generate trajectories (recursive and/or truncated-series engine).
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        /// One of `recursive`, `series`, `both`.
        #[arg(long)]
        engine: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Martingale decomposition residuals and the conditional-mean test.
    Decompose {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Covariance estimation: lag-0, long-run, triangular-weighted sums.
    Estimate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        lags: Option<usize>,
    },
    /// Run one limit-law harness.
    Verify {
        /// One of `wlln`, `rate`, `slln`, `complete`, `expmoment`, `clt`.
        theorem: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated path lengths.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        /// Comma-separated exponential-moment gammas.
        #[arg(long)]
        gammas: Option<String>,
    },
    /// Run the built-in closed-form identity suite.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    // precedence: file < BRCA_SEED < --seed < --set
    if let Ok(env_seed) = std::env::var("BRCA_SEED") {
        cfg.set("seed", env_seed);
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(out) = &cli.out {
        cfg.set("output.dir", out.display().to_string());
    }
    match &cli.command {
        Command::Conditions { p, n_mc } => {
            if let Some(p) = p {
                cfg.set("command.p", p.to_string());
            }
            if let Some(n_mc) = n_mc {
                cfg.set("command.n_mc", n_mc.to_string());
            }
        }
        Command::Simulate { n, engine, reps } => {
            if let Some(n) = n {
                cfg.set("command.n", n.to_string());
            }
            if let Some(engine) = engine {
                cfg.set("command.engine", engine.clone());
            }
            if let Some(reps) = reps {
                cfg.set("command.reps", reps.to_string());
            }
        }
        Command::Decompose { n } | Command::Estimate { n, .. } => {
            if let Some(n) = n {
                cfg.set("command.n", n.to_string());
            }
            if let Command::Estimate { lags: Some(l), .. } = &cli.command {
                cfg.set("command.lags", l.to_string());
            }
        }
        Command::Verify {
            n,
            reps,
            n_list,
            alpha,
            p,
            eps,
            n_max,
            gammas,
            ..
        } => {
            if let Some(n) = n {
                cfg.set("command.n", n.to_string());
            }
            if let Some(reps) = reps {
                cfg.set("command.reps", reps.to_string());
            }
            if let Some(list) = n_list {
                cfg.set("command.n_list", list.clone());
            }
            if let Some(alpha) = alpha {
                cfg.set("command.alpha", alpha.to_string());
            }
            if let Some(p) = p {
                cfg.set("command.p", p.to_string());
            }
            if let Some(eps) = eps {
                cfg.set("command.eps", eps.to_string());
            }
            if let Some(n_max) = n_max {
                cfg.set("command.n_max", n_max.to_string());
            }
            if let Some(gammas) = gammas {
                cfg.set("command.gammas", gammas.clone());
            }
        }
        Command::Selftest => {}
    }
    for pair in &cli.overrides {
        cfg.set_override(pair)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    if let Some(threads) = cli.threads {
        // a second invocation in-process would fail; that is fine for a CLI
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if matches!(cli.command, Command::Selftest) {
        return Ok(selftest::run_selftest());
    }
    let cfg = load_config(cli)?;
    // consumed here so commands may query lazily
    let _ = cfg.get_str("output.formats", "json,csv");
    let out = OutputDir::create(&PathBuf::from(cfg.get_str("output.dir", "out")))?;
    match &cli.command {
        Command::Conditions { .. } => commands::run_conditions(&cfg, &out),
        Command::Simulate { .. } => commands::run_simulate(&cfg, &out),
        Command::Decompose { .. } => commands::run_decompose(&cfg, &out),
        Command::Estimate { .. } => commands::run_estimate(&cfg, &out),
        Command::Verify { theorem, .. } => commands::run_verify(theorem, &cfg, &out),
        Command::Selftest => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
