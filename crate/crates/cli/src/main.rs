mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xhate::corpus::Language;
use xhate::evaluation::{LanguagePair, ReportFormat};
use xhate::training::{HyperParams, OptimizerKind};

#[derive(Parser, Debug)]
#[command(
    name = "xhate",
    version,
    about = "Cross-lingual hate speech classification experiments"
)]
pub struct Cli {
    /// JSON configuration file (paths and default hyperparameters)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Feature cache directory
    #[arg(long, global = true, env = "XHATE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Root of exported backbone adapter directories
    #[arg(long, global = true, env = "XHATE_ADAPTERS_DIR")]
    pub adapters_dir: Option<PathBuf>,

    /// Replace existing output files and run directories
    #[arg(long, global = true)]
    pub overwrite: bool,

    /// Log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the prepared EN and FR corpora from MLMA and CONAN exports
    Prepare(PrepareArgs),
    /// Print corpus statistics and a suggested max_seq_len
    Stats(StatsArgs),
    /// Train one head and evaluate it
    Train(TrainArgs),
    /// Run every cell of a grid file
    Grid(GridArgs),
    /// Write a grid file with the three table columns per backbone
    GridTemplate(GridTemplateArgs),
    /// Evaluate a trained run on a corpus
    Eval(EvalArgs),
    /// Tag and count a run's misclassifications
    Errors(ErrorsArgs),
    /// Compare two error reports over the same corpus
    Compare(CompareArgs),
    /// Assemble result tables across runs
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// MLMA English CSV (no language column needed)
    #[arg(long)]
    pub mlma_en: Option<PathBuf>,
    /// MLMA French CSV (no language column needed)
    #[arg(long)]
    pub mlma_fr: Option<PathBuf>,
    /// MLMA CSV with a language column (see --column-map)
    #[arg(long)]
    pub mlma: Vec<PathBuf>,
    /// CONAN JSON or JSONL file
    #[arg(long)]
    pub conan: Vec<PathBuf>,
    /// Output directory (default: configured data directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// MLMA columns, e.g. text=tweet,labels=sentiment,language=lang,id=HITId
    #[arg(long)]
    pub column_map: Option<String>,
    /// CONAN fields, e.g. hate_text=hateSpeech,language=language,id=cn_id
    #[arg(long)]
    pub field_map: Option<String>,
    /// Separator between MLMA sentiment tags
    #[arg(long, default_value = "_")]
    pub tag_sep: String,
    /// Generate the seeded bilingual toy corpus instead of reading files
    #[arg(long)]
    pub synthetic: bool,
    /// Texts per language for --synthetic
    #[arg(long, default_value_t = 500)]
    pub synthetic_size: usize,
    /// Seed for --synthetic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Prepared corpus files (JSONL)
    #[arg(required = true)]
    pub corpus: Vec<PathBuf>,
    /// Fraction of samples the suggested max_seq_len must cover
    #[arg(long, default_value_t = 0.95)]
    pub coverage: f64,
    #[arg(long, default_value_t = 8)]
    pub min_len: usize,
    #[arg(long, default_value_t = 512)]
    pub max_len: usize,
}

/// Hyperparameter overrides shared by `train` and `grid-template`.
#[derive(Args, Debug, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or adamw
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub d_hidden: Option<usize>,
    #[arg(long)]
    pub dropout_p: Option<f64>,
    /// Add a second hidden linear+ReLU layer
    #[arg(long)]
    pub extra_dense: bool,
    /// Disable dropout
    #[arg(long)]
    pub no_dropout: bool,
    /// Train with unit class weights
    #[arg(long)]
    pub no_class_weights: bool,
}

impl HyperArgs {
    pub fn apply(&self, base: &HyperParams) -> HyperParams {
        let mut hp = base.clone();
        if let Some(v) = self.epochs {
            hp.epochs = v;
        }
        if let Some(v) = self.lr {
            hp.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            hp.batch_size = v;
        }
        if let Some(v) = self.optimizer {
            hp.optimizer = v;
        }
        if let Some(v) = self.weight_decay {
            hp.weight_decay = v;
        }
        if let Some(v) = self.seed {
            hp.seed = v;
        }
        if let Some(v) = self.max_seq_len {
            hp.max_seq_len = v;
        }
        if let Some(v) = self.d_hidden {
            hp.d_hidden = v;
        }
        if let Some(v) = self.dropout_p {
            hp.dropout_p = v;
        }
        hp.extra_dense |= self.extra_dense;
        hp.use_dropout &= !self.no_dropout;
        hp.class_weighting &= !self.no_class_weights;
        hp
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding en.jsonl and fr.jsonl
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    pub train_lang: Language,
    #[arg(long, default_value = "en")]
    pub test_lang: Language,
    /// stub-<d> or an adapter directory name
    #[arg(long, default_value = "stub-32")]
    pub backbone: String,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Directory receiving run directories
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Seed of the train/validation split
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Re-execute the run recorded in this manifest and check its head digest
    #[arg(long, conflicts_with_all = ["run_id", "backbone"])]
    pub from_manifest: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Grid file (JSON list of cells)
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GridTemplateArgs {
    #[arg(long, default_value = "en-fr")]
    pub pair: LanguagePair,
    /// Backbone ids, one table row each
    #[arg(long = "backbone", required = true)]
    pub backbones: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// Which corpus a run is evaluated on.
#[derive(Args, Debug)]
pub struct TargetArgs {
    /// Run directory
    #[arg(long)]
    pub run: PathBuf,
    /// Evaluate on the run's validation split instead of its test set
    #[arg(long, conflicts_with = "corpus")]
    pub val: bool,
    /// Evaluate on this prepared corpus instead
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Write the report JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct ErrorsArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Directory with {ethnic,political}_{en,fr}.txt lexicon overrides
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub short_below: usize,
    #[arg(long, default_value_t = 25)]
    pub long_at_least: usize,
    /// Write the error report JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Error report of the reference run
    pub a: PathBuf,
    /// Error report of the run compared against it
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of run directories
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
