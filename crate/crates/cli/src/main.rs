use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gluekit_cli::config::{load_config, preset, Kind, PRESETS};
use gluekit_cli::{emit_reports, run_experiment, CliResult};

/// Manifold capacity and geometry experiments.
#[derive(Parser)]
#[command(name = "gluekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any config file; the kind is read from the file.
    Run(RunArgs),
    /// GLUE geometry of an ensemble.
    Glue(RunArgs),
    /// Simulated capacity by random projection.
    Simcap(RunArgs),
    /// GLUE measures across a sweep of synthetic ground truth.
    SynthSweep(RunArgs),
    /// Closed-form capacity and accuracy after one gradient step.
    TheoryCurve(RunArgs),
    /// Separability of random points against the closed form.
    CoverCheck(RunArgs),
    /// Two-layer network training with checkpoint metrics.
    Train2l(RunArgs),
    /// Finite-size one-step experiment against theory.
    OneStep(RunArgs),
    /// List shipped presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file.
    config: Option<PathBuf>,
    /// Load a shipped preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Override a config value, e.g. `--set train2l.epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Report directory; defaults to the config's `output`, then results/<kind>.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &RunArgs, kind: Option<Kind>) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref(), args.preset.as_deref(), &args.overrides, kind)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.kind.name()));
    let bundle = run_experiment(&cfg)?;
    for line in &bundle.summary {
        println!("{line}");
    }
    for path in emit_reports(&bundle, &dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => execute(a, None),
        Command::Glue(a) => execute(a, Some(Kind::Glue)),
        Command::Simcap(a) => execute(a, Some(Kind::Simcap)),
        Command::SynthSweep(a) => execute(a, Some(Kind::SynthSweep)),
        Command::TheoryCurve(a) => execute(a, Some(Kind::TheoryCurve)),
        Command::CoverCheck(a) => execute(a, Some(Kind::CoverCheck)),
        Command::Train2l(a) => execute(a, Some(Kind::Train2l)),
        Command::OneStep(a) => execute(a, Some(Kind::OneStep)),
        Command::Presets { name: None } => {
            for (n, _) in PRESETS {
                println!("{n}");
            }
            Ok(())
        }
        Command::Presets { name: Some(n) } => preset(n).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
