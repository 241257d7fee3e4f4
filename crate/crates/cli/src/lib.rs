//! Command-line driver for `ebcal`.

pub mod config;
pub mod error;
pub mod tasks;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_config, LossChoice, OrderingArg, Overrides, RunConfig, Task, OUT_ENV};
use crate::error::Result;
use crate::tasks::{execute, write_wave_sample, Outcome};

#[derive(Parser, Debug)]
#[command(name = "ebcal", version, about = "Empirical-Bayes calibration of computer models with Gaussian-process emulators")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $EBCAL_OUT/<task> or ebcal-out/<task>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub loss: Option<LossChoice>,
    /// Folds for the cross-validation loss.
    #[arg(long = "cv-k", global = true)]
    pub cv_k: Option<usize>,
    /// Sizes and iteration counts of the published experiments.
    #[arg(long = "paper-scale", global = true)]
    pub paper_scale: bool,
    /// Observation ordering for the noise-scale estimate.
    #[arg(long, global = true, value_enum)]
    pub ordering: Option<OrderingArg>,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub observations: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Prediction inputs; a grid over the observation domain otherwise.
    #[arg(long)]
    pub targets: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate θ and the GP hyperparameters.
    Fit(DataArgs),
    /// Predictive means and credible bands from a fit.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        /// `fit.json` from a previous fit.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Metropolis-Hastings baseline.
    Mcmc {
        #[command(flatten)]
        data: DataArgs,
        /// Start the chain at a previous fit.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Experiment drivers.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Self-checks.
    Check {
        #[arg(value_enum, default_value = "equivalence")]
        kind: CheckKind,
    },
    /// Run the task named in the configuration file.
    Run,
    /// Write a synthetic wave data set.
    Sample {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long = "sample-seed", default_value_t = 0)]
        sample_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Wave,
    Sensitivity,
    Ldm,
    KernelDominance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Equivalence,
}

fn data_overrides(o: &mut Overrides, d: DataArgs) {
    o.observations = d.observations;
    o.runs = d.runs;
    o.targets = d.targets;
}

/// Configuration after file, preset, flags and environment are applied.
pub fn resolve(cli: Cli) -> Result<RunConfig> {
    let g = cli.global;
    let base = match &g.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let mut o = Overrides {
        seed: g.seed,
        out: g.out,
        loss: g.loss,
        cv_k: g.cv_k,
        paper_scale: g.paper_scale,
        ordering: g.ordering.map(Into::into),
        ..Default::default()
    };
    match cli.command {
        Command::Fit(d) => {
            o.task = Some(Task::Fit);
            data_overrides(&mut o, d);
        }
        Command::Predict { data, fit } => {
            o.task = Some(Task::Predict);
            data_overrides(&mut o, data);
            o.fit_file = fit;
        }
        Command::Mcmc { data, init, iterations } => {
            o.task = Some(Task::Mcmc);
            data_overrides(&mut o, data);
            o.init_file = init;
            o.iterations = iterations;
        }
        Command::Study { kind, iterations } => {
            o.task = Some(match kind {
                StudyKind::Wave => Task::WaveStudy,
                StudyKind::Sensitivity => Task::Sensitivity,
                StudyKind::Ldm => Task::Ldm,
                StudyKind::KernelDominance => Task::KernelDominance,
            });
            o.iterations = iterations;
        }
        Command::Check { kind: CheckKind::Equivalence } => o.task = Some(Task::EquivalenceCheck),
        Command::Run | Command::Sample { .. } => {}
    }
    let cfg = base.resolve(&o, std::env::var_os(OUT_ENV).map(PathBuf::from));
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Command::Sample { n, sample_seed } = cli.command {
        let dir = cli.global.out.unwrap_or_else(|| PathBuf::from("."));
        let files = write_wave_sample(n, sample_seed, &dir)?;
        return Ok(Outcome { out_dir: dir, summary: files.iter().map(|f| format!("wrote {}", f.display())).collect() });
    }
    execute(&resolve(cli)?)
}
