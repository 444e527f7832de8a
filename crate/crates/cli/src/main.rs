//! `csiloc`: synthetic data generation, pretraining, finetuning, evaluation,
//! gradient checking and run comparison.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csiloc::metrics::MetricMode;
use csiloc::models::ModelId;
use csiloc::Error;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "csiloc", version, about = "CSI fingerprint localization with autoencoder pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset (unlabeled.csit, labeled.csit, positions.csv).
    Synth(Common),
    /// Train an autoencoder (m3 or m4) on unlabeled features.
    Pretrain(Common),
    /// Train a localizer on labeled features and predict the test split.
    Finetune(Common),
    /// Compute metrics from a finetune run or from prediction/truth files.
    Evaluate(EvaluateArgs),
    /// Compare backprop gradients with finite differences on toy networks.
    Gradcheck(GradcheckArgs),
    /// Tabulate the metrics of several evaluated runs.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelId>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<MetricMode>,
    /// Train the pretrained encoder together with the head.
    #[arg(long)]
    unfreeze_encoder: bool,
    /// Directory holding the files written by `synth`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Pretraining run directory (or its checkpoint directory).
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Finetune run directory holding predictions.csv and truth.csv.
    #[arg(long, conflicts_with_all = ["predictions", "truth"])]
    run: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    predictions: Option<PathBuf>,
    #[arg(long, requires = "predictions")]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coordinates sampled per parameter tensor.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Perturb the analytic gradients so the check must fail.
    #[arg(long, hide = true)]
    corrupt_backward: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories holding metrics.csv.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<MetricMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn run_config(&self) -> csiloc::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(model) = self.model {
            cfg.model = Some(model);
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if self.unfreeze_encoder {
            cfg.train.encoder_frozen = false;
        }
        if let Some(dir) = &self.data {
            let d = &mut cfg.data;
            d.unlabeled.get_or_insert_with(|| dir.join(commands::UNLABELED_FILE));
            d.labeled.get_or_insert_with(|| dir.join(commands::LABELED_FILE));
            d.positions.get_or_insert_with(|| dir.join(commands::POSITIONS_FILE));
        }
        if let Some(p) = &self.pretrained {
            cfg.pretrained = Some(p.clone());
        }
        cfg.resolve()
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        Error::State(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(c) => c.run_config().and_then(|cfg| commands::synth(&cfg)),
        Command::Pretrain(c) => c.run_config().and_then(|cfg| commands::pretrain(&cfg)),
        Command::Finetune(c) => c.run_config().and_then(|cfg| commands::finetune(&cfg)),
        Command::Evaluate(a) => a.common.run_config().and_then(|cfg| {
            let source = match (a.run, a.predictions, a.truth) {
                (Some(run), _, _) => commands::EvalSource::Run(run),
                (None, Some(predictions), Some(truth)) => commands::EvalSource::Files { predictions, truth },
                _ => return Err(Error::Config("evaluate needs --run <dir> or --predictions and --truth".into())),
            };
            commands::evaluate(&cfg, &source)
        }),
        Command::Gradcheck(a) => commands::gradcheck(a.seed, a.samples, a.tolerance, a.corrupt_backward),
        Command::Report(a) => commands::report(&a.runs, a.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
