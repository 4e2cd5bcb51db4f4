mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fnfm::model::ModelKind;

use crate::config::{resolve, ProfileSource, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fnfm", version, about = "Field-aware neural factorization machines and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Profile JSON file; applied over the built-in defaults.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Shipped profile: avazu-ablation, avazu-compare or desk.
    #[arg(long)]
    profile: Option<String>,
    /// Output directory for every artifact of the run.
    #[arg(long, env = "FNFM_OUT_DIR", default_value = "fnfm-out")]
    out: PathBuf,
    /// Master seed, copied into the parameter, shuffle, split and generator seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config value, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory with `train.fnds`, `validation.fnds` and optional `test.fnds`
    /// from `prep` or `synth`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a raw click-log CSV and split it by day into cached datasets.
    Prep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate synthetic field-aware data as cached datasets.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and save the best-validation parameters.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Log-loss and AUC of a saved model on a labeled CSV or dataset cache.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// One click probability per CSV row.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Finite-difference gradient check on a toy schema.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Check one kind only; default is every kind.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ModelKind>,
    },
    /// FNFM with the concatenating interaction layer against pooling.
    AblateConcat {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// FNFM with and without batch normalization.
    AblateBn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Grid search per model kind, ranked by validation log-loss.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model kind {s:?} (lr, fm, ffm, nfm, deepfm, fnfm)"))
}

fn load_config(common: &Common, extra: Vec<String>) -> Result<RunConfig, CliError> {
    let source = match (&common.config, &common.profile) {
        (Some(path), _) => ProfileSource::File(path),
        (None, Some(name)) => ProfileSource::Shipped(name),
        (None, None) => ProfileSource::None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend(extra);
    resolve(source, &overrides)
}

fn data_overrides(data: &DataArgs) -> Vec<String> {
    match &data.data_dir {
        Some(dir) => vec![
            "data.source=cache".into(),
            format!("data.dir={}", serde_json::Value::String(dir.display().to_string())),
        ],
        None => Vec::new(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::Prep { common, input } => {
            let extra = input
                .map(|p| vec![format!("data.csv={}", serde_json::Value::String(p.display().to_string()))])
                .unwrap_or_default();
            let config = load_config(&common, extra)?;
            prep(&config, &common.out)
        }
        Command::Synth { common } => synth(&load_config(&common, vec![])?, &common.out),
        Command::Train { common, data } => train(&load_config(&common, data_overrides(&data))?, &common.out),
        Command::Eval { common, model, data } => eval(&load_config(&common, vec![])?, &common.out, &model, &data),
        Command::Predict { common, model, input } => {
            predict(&load_config(&common, vec![])?, &common.out, &model, &input)
        }
        Command::Gradcheck { common, kind } => gradcheck(&load_config(&common, vec![])?, &common.out, kind),
        Command::AblateConcat { common, data } => {
            ablate_concat(&load_config(&common, data_overrides(&data))?, &common.out)
        }
        Command::AblateBn { common, data } => ablate_bn(&load_config(&common, data_overrides(&data))?, &common.out),
        Command::Compare { common, data } => compare(&load_config(&common, data_overrides(&data))?, &common.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fnfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
