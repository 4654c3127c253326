//! `abpole`: batch runner for Aharonov–Bohm eigenvalue experiments.
//!
//! Exit status: 0 when every asserted property holds, 2 when some verdict is
//! inconclusive, 1 on errors or failed properties.

mod artifacts;
mod config;
mod experiments;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Kind};

#[derive(Parser)]
#[command(name = "abpole", version, about = "Aharonov–Bohm eigenvalues with a moving pole")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults are used for missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set h.base_h=0.02` or `--set alphas={"values":[0,1]}`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (same as `--set output=DIR`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues on a sequence of meshes with extrapolation in h.
    Spectrum(RunArgs),
    /// Trace the eigenvalue pair of a double cluster as the pole moves and fit power laws.
    Branch(RunArgs),
    /// Classify directions into split and non-split.
    Cones(RunArgs),
    /// Tabulate G_k and check its qualitative properties.
    Gtable(RunArgs),
    /// Compare centred-pole disk eigenvalues with the Bessel-zero spectrum.
    ValidateDisk(RunArgs),
    /// Compare fitted branch coefficients with the limit-matrix prediction.
    Predict(RunArgs),
    /// Render SVG plots of a finished run.
    Plot {
        /// Run directory.
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        what: plot::What,
    },
}

fn run_experiment(kind: Kind, args: RunArgs) -> Result<i32> {
    let mut sets = args.sets;
    if let Some(out) = args.out {
        sets.push(format!("output={}", serde_json::to_string(&out)?));
    }
    let cfg = ExperimentConfig::load(args.config.as_deref(), &sets, kind)?;
    let config_json = cfg.to_json();
    if args.dry_run {
        print!("{config_json}");
        return Ok(0);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().context("starting the worker pool")?;
    let mut writer = artifacts::Writer::new(&cfg.output)?;
    writer.write("effective-config.json", &config_json)?;
    log::info!("running {} into {}", kind.name(), cfg.output.display());
    let summary = pool.install(|| experiments::run(&cfg, &mut writer))?;
    writer.finish(kind.name(), &config_json)?;
    for l in &summary.lines {
        println!("{l}");
    }
    println!("status: {:?} ({})", summary.status, cfg.output.display());
    Ok(summary.status.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Spectrum(a) => run_experiment(Kind::Spectrum, a),
        Command::Branch(a) => run_experiment(Kind::Branch, a),
        Command::Cones(a) => run_experiment(Kind::Cones, a),
        Command::Gtable(a) => run_experiment(Kind::Gtable, a),
        Command::ValidateDisk(a) => run_experiment(Kind::ValidateDisk, a),
        Command::Predict(a) => run_experiment(Kind::Predict, a),
        Command::Plot { dir, what } => plot::plot(&dir, what).map(|files| {
            for f in files {
                println!("{}", dir.join(f).display());
            }
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
