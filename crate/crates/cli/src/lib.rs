//! Front end of the `memrelax` binary: argument parsing, configs and the
//! commands writing plot-ready CSV and JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
pub use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "memrelax", version, about = "Membrane relaxation experiments")]
struct Cli {
    /// TOML or JSON experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to MEMRELAX_THREADS, then to all cores.
    #[arg(long, global = true, env = "MEMRELAX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArg {
    /// Experiment file, as an alternative to `--config`.
    file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Minimize,
    Recovery,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduced density W₀ with its optimal transverse vector.
    W0 {
        #[command(flatten)]
        file: ConfigArg,
        /// Columns of ξ, e.g. `e1,e2`, `2*e1,e2` or `1:0:0,0:1:0.5`.
        #[arg(long)]
        xi: Option<String>,
        /// Model, e.g. `reciprocal:p=2`.
        #[arg(long)]
        model: Option<String>,
        /// Brute-force cross-check grid; 0 disables.
        #[arg(long)]
        brute_grid: Option<usize>,
    },
    /// Envelope bounds on the diagonal slice.
    Envelope {
        #[command(flatten)]
        file: ConfigArg,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Growth certificate and its audit on the envelope table.
    CertifyGrowth {
        #[command(flatten)]
        file: ConfigArg,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Feasible normal, constrained minima and the blended director.
    Director {
        #[command(flatten)]
        file: ConfigArg,
        /// Comma-separated refinement levels.
        #[arg(long)]
        j: Option<String>,
    },
    /// Recovery sequence energies.
    Recovery {
        #[command(flatten)]
        file: ConfigArg,
        /// Comma-separated thicknesses.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Membrane minimizer for the relaxed density.
    Membrane {
        #[command(flatten)]
        file: ConfigArg,
    },
    /// A single thin-film minimization.
    Thinfilm {
        #[command(flatten)]
        file: ConfigArg,
        /// Thickness; defaults to the first sweep value.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Film-versus-membrane sweep over the thickness schedule.
    GammaSweep {
        #[command(flatten)]
        file: ConfigArg,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Quick invariant suite.
    Selftest {
        #[command(flatten)]
        file: ConfigArg,
    },
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("`--{key}`: cannot parse {t:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.command {
        Command::W0 { file, .. }
        | Command::Envelope { file, .. }
        | Command::CertifyGrowth { file, .. }
        | Command::Director { file, .. }
        | Command::Recovery { file, .. }
        | Command::Membrane { file }
        | Command::Thinfilm { file, .. }
        | Command::GammaSweep { file, .. }
        | Command::Selftest { file } => file.file.clone(),
    };
    let path = match (cli.config, file) {
        (Some(_), Some(_)) => return Err(CliError::Config("give the config either positionally or via --config".into())),
        (a, b) => a.or(b),
    };
    let mut cfg = match &path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    match &cli.command {
        Command::W0 { xi, model, brute_grid, .. } => {
            if let Some(m) = model {
                cfg.model = m.parse().map_err(|e| CliError::Config(format!("`--model`: {e}")))?;
            }
            if let Some(x) = xi {
                cfg.w0.points = vec![commands::parse_xi(x)?.to_row_major()];
            }
            if let Some(g) = brute_grid {
                cfg.w0.brute_grid = *g;
            }
        }
        Command::Envelope { depth: Some(d), .. } => cfg.envelope.depth = *d,
        Command::CertifyGrowth { depth: Some(d), .. } => cfg.growth.depth = *d,
        Command::Director { j: Some(j), .. } => cfg.director.j = parse_list("j", j)?,
        Command::Recovery { eps: Some(e), .. } => cfg.recovery.eps = parse_list("eps", e)?,
        Command::GammaSweep { mode: Some(m), .. } => {
            cfg.sweep.mode = match m {
                ModeArg::Minimize => memrelax_core::dimension_reduction::SweepMode::Minimize,
                ModeArg::Recovery => memrelax_core::dimension_reduction::SweepMode::Recovery,
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("`--threads` must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let out = output::Output::new(&cfg)?;
    match cli.command {
        Command::W0 { .. } => commands::w0(&cfg, &out),
        Command::Envelope { .. } => commands::envelope(&cfg, &out),
        Command::CertifyGrowth { .. } => commands::certify_growth(&cfg, &out),
        Command::Director { .. } => commands::director(&cfg, &out),
        Command::Recovery { .. } => commands::recovery(&cfg, &out),
        Command::Membrane { .. } => commands::membrane(&cfg, &out),
        Command::Thinfilm { eps, .. } => commands::thinfilm(&cfg, &out, eps),
        Command::GammaSweep { .. } => commands::gamma_sweep(&cfg, &out),
        Command::Selftest { .. } => commands::selftest(&cfg),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; help and version requests give 0.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("memrelax: {e}");
            e.exit_code()
        }
    }
}
