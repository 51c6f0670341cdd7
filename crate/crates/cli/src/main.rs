use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bohmlab::protect::MethodSelection;

mod commands;
mod config;
mod output;
mod plot;

use config::{Overrides, RunConfig};

/// Batch runner for one-dimensional Bohmian trajectory experiments.
#[derive(Debug, Parser)]
#[command(name = "bohmlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; omitted keys take their canonical defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory [default: $BOHMLAB_OUT/<command>, else bohmlab-out/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for ensembles and concurrent runs (0: all cores).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,

    /// Trajectory method, overriding the config.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,

    /// Draw ensemble quantiles at random with this seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Also write plotting scripts next to the data.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Lowest eigenvalues and eigenstates of the unperturbed potential.
    Eigen,
    /// Propagate the ground state through the ramp; frame diagnostics only.
    Evolve,
    /// Propagate and follow an ensemble of trajectories.
    Trajectories,
    /// Full protective experiment with crossing statistics.
    Protect,
    /// Dual-method agreement on a fast, non-adiabatic schedule.
    LemmaCheck,
    /// Protective experiments over a grid of lambda and ramp times.
    Sweep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Ode,
    Quantile,
    Both,
}

impl From<MethodArg> for MethodSelection {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ode => MethodSelection::Ode,
            MethodArg::Quantile => MethodSelection::Quantile,
            MethodArg::Both => MethodSelection::Both,
        }
    }
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Evolve => "evolve",
            Command::Trajectories => "trajectories",
            Command::Protect => "protect",
            Command::LemmaCheck => "lemma-check",
            Command::Sweep => "sweep",
        }
    }
}

fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let root = std::env::var_os("BOHMLAB_OUT").map(PathBuf::from).unwrap_or_else(|| Path::new("bohmlab-out").into());
    root.join(cli.command.name())
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    config.apply(Overrides { method: cli.method.map(Into::into), seed: cli.seed });
    let out = output_dir(cli);
    let ctx = commands::Run { config: &config, out: &out, plot: cli.plot };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build().context("thread pool")?;
    log::info!("{} -> {}", cli.command.name(), out.display());
    pool.install(|| match cli.command {
        Command::Eigen => commands::eigen(&ctx),
        Command::Evolve => commands::evolve(&ctx),
        Command::Trajectories => commands::trajectories(&ctx),
        Command::Protect => commands::protect(&ctx),
        Command::LemmaCheck => commands::lemma_check(&ctx),
        Command::Sweep => commands::sweep(&ctx),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", config::one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
