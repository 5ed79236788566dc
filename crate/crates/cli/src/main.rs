//! `mat`: train, evaluate and inspect the hybrid forecaster from the shell.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mat_core::MatError;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(name = "mat", version, about = "Hybrid state-space + attention forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on a dataset; writes checkpoint, metrics and loss curve.
    Train(Common),
    /// Score a trained run next to the naive and linear baselines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory of a previous `train` run (defaults to --out).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write an M×T forecast for one window.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset index of the first look-back step (defaults to the last full window).
        #[arg(long)]
        origin: Option<usize>,
    },
    /// Finite-difference gradient checks at toy dimensions.
    Gradcheck(Common),
    /// Time sequential against parallel selective scans.
    ScanBench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sequence lengths.
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 256, 1024, 4096])]
        lengths: Vec<usize>,
    },
    /// Parse and cache a CSV, then print a per-channel summary.
    Ingest(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Scaled,
    Raw,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    state: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    metrics_space: Option<Space>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("data.path", self.data.as_ref().map(|p| json!(p)));
        put("model.lookback", self.lookback.map(|v| json!(v)));
        put("model.horizon", self.horizon.map(|v| json!(v)));
        put("model.n1", self.n1.map(|v| json!(v)));
        put("model.n2", self.n2.map(|v| json!(v)));
        put("model.dim", self.dim.map(|v| json!(v)));
        put("model.state", self.state.map(|v| json!(v)));
        put("model.heads", self.heads.map(|v| json!(v)));
        put("model.dropout", self.dropout.map(|v| json!(v)));
        put("model.seed", self.seed.map(|v| json!(v)));
        put("train.seed", self.seed.map(|v| json!(v)));
        put("train.epochs", self.epochs.map(|v| json!(v)));
        put("train.batch", self.batch.map(|v| json!(v)));
        put("train.lr", self.lr.map(|v| json!(v)));
        put("train.workers", self.workers.map(|v| json!(v)));
        put(
            "train.metrics_space",
            self.metrics_space.map(|s| match s {
                Space::Scaled => json!("scaled"),
                Space::Raw => json!("raw"),
            }),
        );
        put("out", self.out.as_ref().map(|p| json!(p)));
        m
    }

    fn resolve(&self) -> mat_core::Result<config::RunConfig> {
        let env = std::env::var(config::SEED_ENV).ok();
        config::resolve(self.config.as_deref(), &self.overrides(), env.as_deref())
    }
}

/// Failure surfaced to the shell: exit code plus a one-line JSON record.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    pub fn verification(message: String) -> Self {
        Failure {
            kind: "verification",
            message,
            code: 5,
        }
    }
}

impl From<MatError> for Failure {
    fn from(e: MatError) -> Self {
        let (kind, code) = match &e {
            MatError::Config(_) => ("config", 2),
            MatError::Data(_) | MatError::Parse { .. } | MatError::Io { .. } | MatError::Checkpoint(_) => ("data", 3),
            MatError::Dimension { .. } => ("dimension", 3),
            MatError::Numeric(_) | MatError::Contract(_) => ("numeric", 4),
        };
        Failure {
            kind,
            message: e.to_string(),
            code,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(c) => commands::train(&c.resolve()?),
        Command::Evaluate { common, checkpoint } => commands::evaluate(&common.resolve()?, checkpoint.as_deref()),
        Command::Forecast {
            common,
            checkpoint,
            origin,
        } => commands::forecast(&common.resolve()?, checkpoint.as_deref(), origin),
        Command::Gradcheck(c) => commands::gradcheck(&c.resolve()?),
        Command::ScanBench { common, lengths } => commands::scan_bench(&common.resolve()?, &lengths),
        Command::Ingest(c) => commands::ingest(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "config", "message": first, "exit_code": 2 }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message, "exit_code": f.code }));
            ExitCode::from(f.code)
        }
    }
}
