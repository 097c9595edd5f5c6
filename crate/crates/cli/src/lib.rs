//! Experiment driver: dataset generation, both training phases, evaluation,
//! latent analysis and the online loop, all driven by one configuration.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use crossmodal::ha::Mode;

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "crossmodal", version, about = "Vision-to-haptic cross-modal transfer experiments")]
pub struct Cli {
    /// JSON config file layered over the profile defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Default set of counts and epochs.
    #[arg(long, global = true, default_value = "desk", value_parser = ["desk", "full"])]
    pub profile: String,

    /// Override a config key, e.g. `--set ha.epochs=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY.PATH=VALUE")]
    pub sets: Vec<String>,

    /// Artifact root; overrides the config and the CROSSMODAL_ARTIFACTS variable.
    #[arg(long, global = true)]
    pub artifacts: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Proposed,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Proposed => Mode::Proposed,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and store both phases' datasets.
    GenData,
    /// Train the image model.
    TrainVision,
    /// Train the sensor-sequence model.
    TrainHa {
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Evaluate phase 1 (images) or phase 2 (sensor sequences).
    Eval {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        /// Phase 2 only: evaluate a single mode instead of both.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Export PCA projections of the image latents and fit linear probes.
    Pca,
    /// Raw vs low-pass filtered outputs over one test sequence.
    FilterDemo {
        #[arg(long, default_value_t = 0)]
        sequence: usize,
    },
    /// Run the streaming prediction loop on a freshly simulated swing.
    Online {
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "proposed")]
        mode: ModeArg,
    },
    /// Compare the proposed and baseline training-loss curves.
    CompareCurves,
    /// Print the resolved configuration and its hash.
    ShowConfig,
}

/// Resolves the configuration for a parsed command line.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let env_root = std::env::var_os(config::ARTIFACTS_ENV).map(PathBuf::from);
    let mut cfg = ExperimentConfig::load(&cli.profile, cli.config.as_deref(), &cli.sets, env_root)?;
    if let Some(root) = &cli.artifacts {
        cfg.paths.artifacts = root.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let ctx = commands::Ctx::new(cfg);
    match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::TrainVision => commands::train_vision(&ctx),
        Command::TrainHa { mode } => commands::train_ha_cmd(&ctx, (*mode).into()),
        Command::Eval { phase: 1, .. } => commands::eval_phase1(&ctx),
        Command::Eval { mode, .. } => commands::eval_phase2(&ctx, mode.map(Into::into)),
        Command::Pca => commands::pca_cmd(&ctx),
        Command::FilterDemo { sequence } => commands::filter_demo(&ctx, *sequence),
        Command::Online { object, duration, mode } => {
            let object = object.clone().unwrap_or_else(|| ctx.cfg.online.object.clone());
            commands::online_cmd(&ctx, &object, duration.unwrap_or(ctx.cfg.online.duration_s), (*mode).into())
        }
        Command::CompareCurves => commands::compare_curves_cmd(&ctx),
        Command::ShowConfig => {
            let text = serde_json::to_string_pretty(&ctx.cfg).map_err(crossmodal::Error::from)?;
            println!("{text}");
            println!("config hash: {}", ctx.cfg.hash());
            Ok(())
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
/// Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
