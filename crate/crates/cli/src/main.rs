use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recon_core::pipeline::{self, ScenarioConfig};
use recon_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "reconlab", version, about = "Reconstruction attacks on synthetic block statistics")]
struct Cli {
    /// Scenario config (TOML). Built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for block-level stages.
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the ground-truth universe.
    Generate,
    /// Evaluate the queries and apply the mechanism.
    Publish,
    /// Detect, reconstruct and measure solution variability from published statistics.
    Attack,
    /// Score the attack against the ground truth.
    Evaluate,
    /// All stages of one scenario.
    Run,
    /// Pool every report under the output directory into tables and plots.
    Report {
        /// Directory to scan; defaults to the output directory.
        dir: Option<PathBuf>,
    },
    /// Every scenario of the config's sweep, for every sweep seed.
    Sweep,
    /// Print the effective config.
    Config,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.sweep.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), Error> {
    let dir = pipeline::run_dir(&cfg.out_dir, &cfg.label, cfg.seed);
    match &cli.cmd {
        Cmd::Generate => {
            let u = pipeline::generate_into(cfg, &dir)?;
            println!("{}: {} blocks, {} households", dir.display(), u.blocks.len(), u.households().count());
        }
        Cmd::Publish => {
            let s = pipeline::publish_from(cfg, &dir)?;
            println!("{}: statistics for {} blocks", dir.display(), s.len());
        }
        Cmd::Attack => {
            let a = pipeline::attack_from(cfg, &dir)?;
            let flagged = a.detections.iter().filter(|d| d.verdict.is_flagged()).count();
            println!("{}: {flagged} of {} blocks flagged", dir.display(), a.detections.len());
        }
        Cmd::Evaluate | Cmd::Run => {
            let r = match cli.cmd {
                Cmd::Run => pipeline::run_in(cfg, &dir)?,
                _ => pipeline::evaluate_from(cfg, &dir)?,
            };
            print!("{}", pipeline::format_comparison(std::slice::from_ref(&r)));
        }
        Cmd::Report { dir } => {
            let reports = pipeline::report_dir(dir.as_deref().unwrap_or(&cfg.out_dir))?;
            print!("{}", pipeline::format_comparison(&reports));
        }
        Cmd::Sweep => {
            let reports = pipeline::sweep(cfg)?;
            print!("{}", pipeline::format_comparison(&reports));
        }
        Cmd::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            log::error!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
