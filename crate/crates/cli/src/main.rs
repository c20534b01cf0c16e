use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use powercal_cli::{cmd_bf, cmd_run, cmd_simulate, load_scenario, with_pool, CliError, RunConfig, EXIT_OK};

#[derive(Parser)]
#[command(name = "powercal", version, about = "Calibrated Beta priors for normalized power priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to the config, then POWERCAL_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Select the δ prior by calibrated Bayes factors and summarize the posterior.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Log Bayes factors of every grid shape against Beta(1,1).
    Bf {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a disagreement sweep from a scenario spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also write one SVG chart per figure table.
        #[arg(long)]
        svg: bool,
    },
}

fn load_config(path: &PathBuf, common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Validation("no output directory: pass --out or set `out` in the config".into()))?;
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Run { config, common } => {
            let (cfg, out) = load_config(&config, &common)?;
            with_pool(cfg.threads, || cmd_run(&cfg))??.commit(&out)
        }
        Command::Bf { config, common } => {
            let (cfg, out) = load_config(&config, &common)?;
            with_pool(cfg.threads, || cmd_bf(&cfg))??.commit(&out)
        }
        Command::Simulate { spec, common, svg } => {
            let scenario = load_scenario(&spec)?;
            let out = common.out.ok_or_else(|| CliError::Validation("simulate needs --out".into()))?;
            let seed = common.seed.unwrap_or(1);
            with_pool(common.threads, || cmd_simulate(&scenario, seed, &out, svg))?
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
