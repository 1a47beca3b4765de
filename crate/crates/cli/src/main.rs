//! `opss`: spectra, robust sequence optimization, robustness scans and
//! open-system flux from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 domain error (no
//! crossing, unreachable target), 3 numerical failure.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use opss_core::error::ErrorClass;
use opss_core::model::ModelKind;

use config::{ConfigError, Overrides, RunConfig};
use run::Run;

#[derive(Parser)]
#[command(name = "opss", version, about = "Segmented-sequence robustness workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output root; defaults to the config's `output_dir`, then
    /// $OPSS_OUTPUT_ROOT, then ./runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,

    #[arg(long, global = true)]
    segments: Option<usize>,

    /// Sequence JSON written by `optimize`.
    #[arg(long, global = true)]
    sequence: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    #[value(name = "three_photon")]
    ThreePhoton,
    #[value(name = "casimir")]
    Casimir,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::ThreePhoton => ModelKind::ThreePhoton,
            ModelArg::Casimir => ModelKind::Casimir,
        }
    }
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Energy levels against the frequency ratio and the avoided crossing.
    Spectrum,
    /// Optimize a robust N-segment sequence.
    Optimize,
    /// Fidelity landscape over a 2D error grid and its high-fidelity radius.
    Scan,
    /// Windowed fidelity statistics per error axis.
    Stats,
    /// Master-equation photon flux and its error landscape.
    Flux,
    /// Check a configuration and sequence and report basic diagnostics.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Optimize => "optimize",
            Command::Scan => "scan",
            Command::Stats => "stats",
            Command::Flux => "flux",
            Command::Validate => "validate",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<opss_core::error::Error>() {
            return match e.class() {
                ErrorClass::Config | ErrorClass::Io => 1,
                ErrorClass::Domain => 2,
                ErrorClass::Numerical => 3,
            };
        }
    }
    1
}

fn execute(cli: &Cli) -> anyhow::Result<PathBuf> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        model: cli.model.map(Into::into),
        segments: cli.segments,
        sequence: cli.sequence.clone(),
    };
    let cfg = file.resolve(&overrides)?;
    cfg.validate_blocks()?;
    cfg.model_config()?;
    if matches!(cli.command, Command::Optimize) {
        cfg.optimizer_config()?;
    }
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    let root = run::output_root(cli.out.as_deref(), &cfg);
    let mut run = Run::start(cli.command.name(), cfg.clone(), root)?;
    let result = match cli.command {
        Command::Spectrum => commands::spectrum(&mut run, &cfg),
        Command::Optimize => commands::optimize(&mut run, &cfg),
        Command::Scan => commands::scan(&mut run, &cfg),
        Command::Stats => commands::stats(&mut run, &cfg),
        Command::Flux => commands::flux(&mut run, &cfg),
        Command::Validate => commands::validate(&mut run, &cfg),
    };
    match result {
        Ok(()) => run.finish(),
        Err(e) => {
            run.abandon();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
