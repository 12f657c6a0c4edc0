use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scalab::{Lab, LabError, PipelineConfig, Stage};

/// Simulated side-channel lab: capture, attack, mine, protect, evaluate.
#[derive(Debug, Parser)]
#[command(name = "scalab", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; overrides the config file and SCALAB_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent attackers.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Acquire the fixed-key unprotected trace pool.
    Capture,
    /// Train the configured attackers on the profiling split.
    Train,
    /// Rank and accuracy of the trained attackers on the attack split.
    Attack,
    /// One-pixel perturbations against the trained models, with histograms.
    Mine,
    /// Find the code positions behind the perturbation hot spots.
    Locate,
    /// Pick noise instructions whose amplitude matches the perturbations.
    Select,
    /// Emit the protected program.
    Protect,
    /// Retrain every attacker on unprotected and protected traces.
    Evaluate,
    /// Retrain on per-trace adversarial conversions of the pool.
    StudyNaive,
    /// Cycle counts of unprotected and protected executions.
    Overhead,
    /// Every stage in order.
    All,
    /// Print the effective configuration.
    ShowConfig,
}

fn config(cli: &Cli) -> Result<(PipelineConfig, PathBuf), LabError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| LabError::Value { key: s.clone(), reason: "expected KEY=VALUE".into() })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .or_else(|| std::env::var_os("SCALAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("scalab-out"));
    Ok((cfg, out))
}

fn run(cli: &Cli) -> Result<(), LabError> {
    let (cfg, out) = config(cli)?;
    let stage = match cli.command {
        Command::Capture => Stage::Capture,
        Command::Train => Stage::Train,
        Command::Attack => Stage::Attack,
        Command::Mine => Stage::Mine,
        Command::Locate => Stage::Locate,
        Command::Select => Stage::Select,
        Command::Protect => Stage::Protect,
        Command::Evaluate => Stage::Evaluate,
        Command::StudyNaive => Stage::StudyNaive,
        Command::Overhead => Stage::Overhead,
        Command::All => return Lab::new(cfg, out).run_all(),
        Command::ShowConfig => {
            print!("{}", cfg.to_text());
            return Ok(());
        }
    };
    Lab::new(cfg, out).run_stage(stage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scalab: {e}");
            ExitCode::FAILURE
        }
    }
}
