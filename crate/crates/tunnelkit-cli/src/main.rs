#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::Context;
use config::RunConfig;
use error::CliError;
use output::{sha256_hex, Output};

#[derive(Parser)]
#[command(name = "tunnelkit", version, about = "Channel-resolved spectral diagnostics for radial magnetic Dirac operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration (see config.schema.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Patch a config value, e.g. --override grid.n=512 (repeatable).
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write whitespace-separated .dat mirrors of every CSV.
    #[arg(long, global = true)]
    dat: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Per-channel eigenvalues of the discretized operator.
    Spectrum,
    /// Internal constants and the feasibility report.
    Tune,
    /// Classically allowed regions and their containment.
    Regions,
    /// Quadratic-form margins, inverse and twisted gaps.
    Inequalities,
    /// Spectral projection and functional-calculus comparison.
    Project,
    /// Weighted tunneling sums and projection norms.
    Tunneling,
    /// Time evolution and moment growth.
    Evolve,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Tune => "tune",
            Command::Regions => "regions",
            Command::Inequalities => "inequalities",
            Command::Project => "project",
            Command::Tunneling => "tunneling",
            Command::Evolve => "evolve",
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::config("--config", "a configuration file is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let cfg = RunConfig::parse(&text, &cli.overrides)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        // a second call fails once a pool exists; the first cap wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let resolved = serde_json::to_vec(&cfg).map_err(|e| CliError::io("config", e))?;
    let hash = sha256_hex(&resolved);
    let ctx = Context::new(cfg)?;
    let mut out = Output::new(&cli.out, cli.dat)?;
    out.json("config.resolved.json", &ctx.cfg)?;
    match cli.command {
        Command::Spectrum => commands::spectrum(&ctx, &mut out)?,
        Command::Tune => commands::tune(&ctx, &mut out)?,
        Command::Regions => commands::regions(&ctx, &mut out)?,
        Command::Inequalities => commands::inequalities(&ctx, &mut out)?,
        Command::Project => commands::project(&ctx, &mut out)?,
        Command::Tunneling => commands::tunneling(&ctx, &mut out)?,
        Command::Evolve => commands::evolve(&ctx, &mut out)?,
    }
    out.finish(cli.command.name(), &hash)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
