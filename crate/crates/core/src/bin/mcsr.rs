use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multicast_sr::harness::{self, ExperimentKind, ExperimentSpec};
use multicast_sr::Error;

#[derive(Parser)]
#[command(name = "mcsr", version, about = "Multigroup multicast sum-rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum rate versus total transmit power (Rayleigh).
    Fig2(Opts),
    /// Sum rate versus users per group (Rayleigh).
    Fig3(Opts),
    /// Beam patterns for a fixed line-of-sight geometry.
    Fig4(Opts),
    /// Sum rate versus co-group angular separation.
    Fig5(Opts),
    /// Per-user rates on seeded line-of-sight instances.
    Paradigm(Opts),
    /// One instance with full report, trace and precoder.
    Single(Opts),
}

#[derive(Args)]
struct Opts {
    /// JSON experiment spec; missing fields take the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the spec's `output`, else `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

enum Failed {
    Config(String),
    Trials(usize),
    Other(String),
}

fn spec_for(kind: ExperimentKind, o: &Opts) -> Result<ExperimentSpec, Failed> {
    let config = |e: Error| Failed::Config(e.to_string());
    let mut spec = match &o.config {
        Some(path) => ExperimentSpec::load(path).map_err(config)?,
        None => ExperimentSpec::defaults(kind),
    };
    if spec.kind != kind {
        return Err(Failed::Config(format!("spec kind {:?} does not match the subcommand", spec.kind)));
    }
    if let Some(seed) = o.seed {
        spec.config.seed = seed;
    }
    if let Some(trials) = o.trials {
        spec.trials = trials;
    }
    if let Some(out) = &o.out {
        spec.output = Some(out.clone());
    }
    spec.validate().map_err(config)?;
    Ok(spec)
}

fn execute(kind: ExperimentKind, o: &Opts) -> Result<(), Failed> {
    let spec = spec_for(kind, o)?;
    let dir = spec.output.clone().unwrap_or_else(|| "results".into());
    let other = |e: Error| match e {
        e @ Error::Config(_) => Failed::Config(e.to_string()),
        e => Failed::Other(e.to_string()),
    };
    let (written, failures) = if kind == ExperimentKind::Single {
        let report = harness::run_single_spec(&spec).map_err(other)?;
        (report.write(&dir).map_err(other)?, report.output.failures.len())
    } else {
        let out = harness::run(&spec, o.jobs).map_err(other)?;
        (out.write(&dir).map_err(other)?, out.failures.len())
    };
    for path in written {
        println!("{}", path.display());
    }
    if failures > 0 {
        return Err(Failed::Trials(failures));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, opts) = match &cli.command {
        Command::Fig2(o) => (ExperimentKind::PowerSweep, o),
        Command::Fig3(o) => (ExperimentKind::UsersPerGroup, o),
        Command::Fig4(o) => (ExperimentKind::UlaPattern, o),
        Command::Fig5(o) => (ExperimentKind::UlaSeparation, o),
        Command::Paradigm(o) => (ExperimentKind::Paradigm, o),
        Command::Single(o) => (ExperimentKind::Single, o),
    };
    match execute(kind, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failed::Trials(n)) => {
            eprintln!("mcsr: {n} trial failures, see the metadata file");
            ExitCode::from(2)
        }
        Err(Failed::Config(m)) => {
            eprintln!("mcsr: {m}");
            ExitCode::from(3)
        }
        Err(Failed::Other(m)) => {
            eprintln!("mcsr: {m}");
            ExitCode::FAILURE
        }
    }
}
