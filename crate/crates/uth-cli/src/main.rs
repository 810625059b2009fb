//! `uth`: command-line driver for the descriptor-hashing pipeline.
//!
//! Subcommands cover the full workflow: `ingest` converts descriptors
//! into the binary store, `train` pre-trains and optionally fine-tunes a
//! stack, `fit-baseline` fits one of the six classic hashers, `encode`
//! hashes a dataset with any saved model, `evaluate` produces recall@R /
//! mAP reports, `dist-hist` emits pair-distance histograms, and
//! `make-synthetic` generates the clustered fixture used by the
//! experiments. Exit codes: 0 success, 1 usage or configuration error,
//! 2 data or format error, 3 numerical divergence.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uth::UthError;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration; exits with code 1.
    Usage(String),
    /// Library failure; the error kind picks the exit code.
    Lib(UthError),
}

impl From<UthError> for CliError {
    fn from(e: UthError) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => 1,
        CliError::Lib(err) => match err {
            UthError::Argument(_) | UthError::Capability(_) => 1,
            UthError::Divergence(_) => 3,
            _ => 2,
        },
    }
}

#[derive(Parser)]
#[command(name = "uth", version, about = "Binary hashing pipeline for image descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand: a key=value config file, ad-hoc
/// overrides, and the output directory (config key `output_dir`).
#[derive(Args)]
struct CommonArgs {
    /// Key=value configuration file, one pair per line, # comments
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set rbm.epochs=5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; artifacts and the resolved config land here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap worker threads (default: machine parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert descriptors (binary or CSV) into the binary store format
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// Input descriptor file
        #[arg(long)]
        data: Option<PathBuf>,
        /// Input format: binary | csv (default: by file extension)
        #[arg(long)]
        format: Option<String>,
        /// Min-max normalize to [0,1] and write a <output>.norm.csv sidecar
        #[arg(long)]
        normalize: bool,
    },
    /// Pre-train a stack on descriptors, optionally fine-tune with triplets
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Training descriptors (binary store format)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated layer sizes, input first, e.g. 128,64,32
        #[arg(long)]
        layer_sizes: Option<String>,
        /// Layer-size preset: paper | paper-256 | paper-128 | paper-64 | paper-32
        #[arg(long)]
        preset: Option<String>,
        /// Code width in bits; with --preset paper picks the preset row
        #[arg(long)]
        bits: Option<usize>,
        /// Triplet fine-tuning: off | threshold | uniform
        #[arg(long)]
        finetune: Option<String>,
        /// Base seed for all training stages
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hash a descriptor file with a saved model (stack or baseline)
    Encode {
        #[command(flatten)]
        common: CommonArgs,
        /// Saved model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Descriptors to encode
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit one of the classic hashing baselines
    FitBaseline {
        #[command(flatten)]
        common: CommonArgs,
        /// Training descriptors (binary store format)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Baseline: lsh | sklsh | sh | pcahash | itq | bpbc
        #[arg(long)]
        method: Option<String>,
        /// Code width in bits
        #[arg(long)]
        bits: Option<usize>,
        /// Seed for the randomized fits
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank a query set against a database and report recall@R and mAP
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Database file: binary codes or raw descriptors
        #[arg(long)]
        db: Option<PathBuf>,
        /// Query file of the same kind as the database
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Tab-separated ground truth (query <TAB> id,id,...)
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Comma-separated recall cutoffs, e.g. 10,100
        #[arg(long)]
        r_list: Option<String>,
        /// Scheme label for the report rows
        #[arg(long)]
        scheme: Option<String>,
        /// Drop the query id from its own ranking
        #[arg(long)]
        exclude_self: bool,
    },
    /// Histogram squared distances of matching vs non-matching pairs
    DistHist {
        #[command(flatten)]
        common: CommonArgs,
        /// Descriptor file the pair ids refer to
        #[arg(long)]
        data: Option<PathBuf>,
        /// Tab-separated matching id pairs
        #[arg(long)]
        matches: Option<PathBuf>,
        /// Tab-separated non-matching id pairs
        #[arg(long)]
        nonmatches: Option<PathBuf>,
        /// Number of histogram bins
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Generate the clustered synthetic fixture with ground truth and pairs
    MakeSynthetic {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of clusters
        #[arg(long)]
        clusters: Option<usize>,
        /// Points per cluster
        #[arg(long)]
        points_per_cluster: Option<usize>,
        /// Descriptor dimensionality
        #[arg(long)]
        dim: Option<usize>,
        /// Within-cluster standard deviation
        #[arg(long)]
        cluster_std: Option<f64>,
        /// Generator seed
        #[arg(long)]
        seed: Option<u64>,
        /// Pair-list budget per class
        #[arg(long)]
        max_pairs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version land here too; those exit 0.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
