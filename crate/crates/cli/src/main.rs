mod commands;
mod config;
mod exit;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vde::pipeline::Method;

use crate::config::RunConfig;
use crate::output::OutDir;

/// Variational dynamics encoder pipeline: simulate, fit, score, generate and
/// interpret slow coordinates.
#[derive(Debug, Parser)]
#[command(name = "vde", version)]
struct Cli {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate Brownian dynamics on the Müller-Brown potential.
    Simulate,
    /// Fit a VDE, tICA or PCA model.
    Fit {
        #[arg(long)]
        method: Method,
        /// Trajectory CSVs, or directories written by `simulate`.
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Project trajectories onto a fitted model's coordinates.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Cross-validated GMRQ over seeded hold-out splits.
    Score {
        /// Methods to score.
        #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
        methods: Vec<Method>,
        /// Pre-fitted model used in every split instead of refitting, as
        /// `method=path`.
        #[arg(long = "model", value_parser = parse_model_arg)]
        models: Vec<(Method, PathBuf)>,
        /// Fit and score on all trajectories instead of splitting.
        #[arg(long)]
        in_sample: bool,
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Propagate frames through a VDE at several noise scales.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Trajectories the start frames are drawn from.
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Gradient saliency of transitions from source to target frames.
    Salience {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// JSON object mapping feature names to group labels.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Free-energy profile along a model coordinate or an input column.
    ExportFes {
        /// Model whose first coordinate is histogrammed; without it the
        /// inputs are taken as latents.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Input column used when no model is given.
        #[arg(long, default_value_t = 0)]
        column: usize,
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
}

fn parse_model_arg(s: &str) -> Result<(Method, PathBuf), String> {
    let (m, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected method=path, got {s:?}"))?;
    Ok((m.parse().map_err(|e: vde::Error| e.to_string())?, PathBuf::from(p)))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit { .. } => "fit",
            Command::Transform { .. } => "transform",
            Command::Score { .. } => "score",
            Command::Generate { .. } => "generate",
            Command::Salience { .. } => "salience",
            Command::ExportFes { .. } => "export-fes",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.reseed(seed);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| exit::ConfigError(format!("--threads: {e}")))?;
    }
    let out = OutDir::create(&cli.out)?;
    out.write_resolved_config(cli.command.name(), &config)?;
    match cli.command {
        Command::Simulate => commands::simulate(&config, &out),
        Command::Fit { method, trajectories } => commands::fit(&config, &out, method, &trajectories),
        Command::Transform { model, trajectories } => commands::transform(&out, &model, &trajectories),
        Command::Score { methods, models, in_sample, trajectories } => {
            commands::score(&config, &out, &methods, &models, in_sample, &trajectories)
        }
        Command::Generate { model, trajectories } => {
            commands::generate(&config, &out, &model, &trajectories)
        }
        Command::Salience { model, sources, targets, groups } => {
            commands::salience(&config, &out, &model, &sources, &targets, groups.as_deref())
        }
        Command::ExportFes { model, column, trajectories } => {
            commands::export_fes(&config, &out, model.as_deref(), column, &trajectories)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
