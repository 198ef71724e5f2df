//! Command-line front end: `synth`, `ingest`, `template`, `train`, `eval`,
//! `explain` and `pipeline`. Every command prints one JSON document to
//! stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use brainplate::net::{EncoderKind, NetworkHyperParams};
use brainplate::template::{HingeDirection, TemplateHyperParams};
use brainplate::Error;
use clap::{Args, Parser, Subcommand};

mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "brainplate",
    version,
    about = "Group template graphs for brain connectivity classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic population with planted group templates.
    Synth(SynthArgs),
    /// Convert ROI time series into connectivity matrices.
    Ingest(IngestArgs),
    /// Fit one sparse template per group.
    Template(TemplateArgs),
    /// Train the template-augmented classifier.
    Train(TrainArgs),
    /// Evaluate a trained model on a split slice.
    Eval(EvalArgs),
    /// Mine the contrast subgraph between two group templates.
    Explain(ExplainArgs),
    /// Split, fit templates, train, evaluate and explain in one pass.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    rois: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long)]
    subjects_per_group: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.6)]
    effect: f64,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Manifest whose paths point at time-series CSV files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct TemplateOpts {
    #[arg(long, default_value_t = 0.1)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.005)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    #[arg(long, default_value = "separation", value_parser = parse_hinge)]
    hinge_direction: HingeDirection,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl TemplateOpts {
    fn hyper(&self) -> TemplateHyperParams {
        TemplateHyperParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            gamma: self.gamma,
            hinge_direction: self.hinge_direction,
            max_iter: self.max_iter,
            tol: self.tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct NetOpts {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value = "cnn", value_parser = parse_encoder)]
    encoder: EncoderKind,
}

impl NetOpts {
    fn hyper(&self, seed: u64) -> NetworkHyperParams {
        NetworkHyperParams {
            epochs: self.epochs,
            learning_rate: self.lr,
            momentum: self.momentum,
            batch_size: self.batch_size,
            encoder_kind: self.encoder,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ExplainOpts {
    #[arg(long, default_value_t = 0.02)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
}

#[derive(Debug, Args)]
struct TemplateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fit on the training slice of the stratified split with this seed
    /// instead of the whole dataset.
    #[arg(long)]
    split_seed: Option<u64>,
    #[command(flatten)]
    opts: TemplateOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    /// Seeds both the split and the network.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    opts: NetOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Slice {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    templates: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Split seed; must match the one used for training.
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Slice::Test)]
    subset: Slice,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    templates: PathBuf,
    #[arg(long, default_value_t = 0)]
    group_a: usize,
    #[arg(long, default_value_t = 1)]
    group_b: usize,
    #[command(flatten)]
    opts: ExplainOpts,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write |G_a − G_b| as CSV.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    template: TemplateOpts,
    #[command(flatten)]
    net: NetOpts,
    #[command(flatten)]
    explain: ExplainOpts,
    /// Defaults to `pipeline_seed<seed>` next to the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_hinge(s: &str) -> Result<HingeDirection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_encoder(s: &str) -> Result<EncoderKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        return EXIT_NUMERIC;
    }
    match err {
        Error::InvalidArgument(_) | Error::InvalidSpec(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn emit(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    // A closed pipe downstream is not our failure.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Template(a) => commands::template(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(value) => {
            emit(&value);
            EXIT_OK
        }
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err}");
            let value = serde_json::json!({ "error": err.to_string(), "exit_code": code });
            emit(&value);
            code
        }
    }
}
