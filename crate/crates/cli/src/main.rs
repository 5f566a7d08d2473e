//! `ksblow`: runs the chemotaxis experiments from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ks_blowup::config::{Config, ExperimentKind};
use ks_blowup::experiments::run_experiment;
use ks_blowup::Error;

#[derive(Parser)]
#[command(name = "ksblow", version, about = "Blow-up experiments for radial two-species chemotaxis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One simulation of the configured initial data.
    SingleRun(Common),
    /// Diffusion of a heat kernel against the exact solution.
    HeatKernelValidation(Common),
    /// Picard iterates of the mild formulation against the integrator.
    PicardCrosscheck(Common),
    /// The Grönwall blow-up time on the 27-point lattice.
    GronwallSuite(Common),
    /// Family table and threshold scan.
    FamilyScan(Common),
    /// Energy inequality and pointwise/coupling probes along a run.
    LemmaProbes(Common),
    /// Runs whatever `[experiment] kind` the config names.
    Run(Common),
    /// Prints the full default configuration of an experiment.
    ShowConfig {
        kind: String,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration layered over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of grid cells.
    #[arg(long)]
    resolution: Option<usize>,
    /// Final time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Interpolation exponent for probes and the threshold coordinate.
    #[arg(long)]
    theta: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(kind: Option<ExperimentKind>, common: &Common) -> Result<Config, Error> {
    let mut cfg = match (&common.config, kind) {
        (Some(path), k) => Config::load(path, k)?,
        (None, Some(k)) => Config::default_for(k),
        (None, None) => return Err(Error::Config("`run` needs --config".into())),
    };
    if let Some(m) = common.resolution {
        cfg.grid.cells = m;
    }
    if let Some(t) = common.horizon {
        cfg.experiment.horizon = t;
    }
    if let Some(th) = common.theta {
        cfg.experiment.theta = th;
        cfg.family.thetas = vec![th];
    }
    if let Some(j) = common.jobs {
        cfg.experiment.jobs = Some(j);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::SingleRun(c) => (Some(ExperimentKind::SingleRun), c),
        Command::HeatKernelValidation(c) => (Some(ExperimentKind::HeatKernelValidation), c),
        Command::PicardCrosscheck(c) => (Some(ExperimentKind::PicardCrosscheck), c),
        Command::GronwallSuite(c) => (Some(ExperimentKind::GronwallSuite), c),
        Command::FamilyScan(c) => (Some(ExperimentKind::FamilyScan), c),
        Command::LemmaProbes(c) => (Some(ExperimentKind::LemmaProbes), c),
        Command::Run(c) => (None, c),
        Command::ShowConfig { kind } => {
            return match kind.parse::<ExperimentKind>() {
                Ok(k) => {
                    print!("{}", Config::default_for(k).to_toml());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    let cfg = match load(kind, &common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.kind().name()));
    log::info!("running {} into {}", cfg.kind(), out.display());
    match run_experiment(&cfg, &out) {
        Ok(report) => {
            let status = if report.passed { "passed" } else { "failed" };
            println!("{}: {status}", report.kind);
            for f in &report.files {
                println!("  {}", f.display());
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("summary written to {}", out.join("summary.toml").display());
            exit_for(&e)
        }
    }
}
