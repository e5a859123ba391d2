use clap::{Args, Parser, Subcommand};
use radtherm::{exit_code, ExperimentConfig, ExperimentKind, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Kinetic radiative transfer experiments in slab geometry.
#[derive(Parser)]
#[command(name = "radtherm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single kinetic run (stationary or time dependent).
    Run(Common),
    /// ε-convergence study against the matched limit problem.
    Study(Common),
    /// Regime classification table.
    Table(Common),
    /// Milne and thermalization layers at both walls.
    Layers(Common),
    /// Bulk initial layers and the initial-boundary layer.
    InitLayers(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration overlaid on the experiment defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Seed (overrides `seed`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

fn load(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(kind, args.config.as_deref())?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let (kind, args) = match &cli.command {
        Command::Run(a) => (ExperimentKind::SingleRun, a),
        Command::Study(a) => (ExperimentKind::ConvergenceStudy, a),
        Command::Table(a) => (ExperimentKind::RegimeTable, a),
        Command::Layers(a) => (ExperimentKind::LayerStudy, a),
        Command::InitLayers(a) => (ExperimentKind::InitialLayerStudy, a),
    };
    match load(kind, args).and_then(|cfg| radtherm::execute(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("radtherm: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
