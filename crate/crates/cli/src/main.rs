//! `callsift`: vocalisation detection, condensation and species classification.
//!
//! Exit status is 0 on success, 1 when processing fails and 2 on usage or
//! configuration errors. Every run appends one provenance line to the run log.

mod commands;
mod config;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CALLSIFT_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "callsift", version, about = "Detect, condense and classify animal vocalisations")]
struct Cli {
    /// Configuration file (default: $CALLSIFT_CONFIG, else built-in defaults)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice (overrides the config)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print the effective configuration and exit
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus manifest
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Feature CSV written by extract-features
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Split TSV written by split
    #[arg(long, value_name = "PATH")]
    pub split: PathBuf,
    /// Add background chunks as an extra class
    #[arg(long)]
    pub with_background: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect candidate vocalisation events in every recording
    Detect {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Extra config file with per-species thresholds
        #[arg(long, value_name = "PATH")]
        thresholds: Option<PathBuf>,
        /// Events TSV to write
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Choose per-species detector thresholds from seed annotations
    OptimizeThresholds {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Seed annotations (selection table)
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,
        /// Config fragment with the chosen thresholds
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Concatenate detected events into one condensed file per species
    Condense {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Events TSV
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        /// Also project these annotations into condensed time
        #[arg(long, value_name = "PATH")]
        annotations: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Map annotations made on condensed audio back to the source recordings
    Lift {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Condensed index TSV
        #[arg(long, value_name = "PATH")]
        index: PathBuf,
        /// Selection table on the condensed audio
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Compute 1140 functionals for every annotated chunk
    ExtractFeatures {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Selection tables (repeatable)
        #[arg(long, value_name = "PATH", required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Assign chunks to train/valid/test in chronological order
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Selection tables (repeatable)
        #[arg(long, value_name = "PATH", required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Draw duration-matched background chunks
    SampleBackground {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train a model with a fixed C
    Train {
        #[command(flatten)]
        task: TaskArgs,
        /// Regularization constant
        #[arg(long)]
        c: f64,
        /// Normalization (default: from config)
        #[arg(long)]
        norm: Option<String>,
        /// Train on the train split only instead of train and valid
        #[arg(long)]
        train_only: bool,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Select C on the validation split
    GridSearch {
        #[command(flatten)]
        task: TaskArgs,
        /// Normalization (default: from config)
        #[arg(long)]
        norm: Option<String>,
        /// Search both normalizations
        #[arg(long, conflicts_with = "norm")]
        all_norms: bool,
        /// Grid TSV to write
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Classify feature rows with a trained model
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Refit with the selected C and score the test split once
    Evaluate {
        #[command(flatten)]
        task: TaskArgs,
        /// Grid TSV written by grid-search
        #[arg(long, value_name = "PATH")]
        grid: PathBuf,
        /// Report TSV to write
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Confusion matrices TSV
        #[arg(long, value_name = "PATH")]
        confusion: Option<PathBuf>,
        /// Directory for the refitted models
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
    },
    /// Per-species spectral SNR profile of calls against background
    Snr {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,
        #[arg(long, value_name = "PATH")]
        background: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Write a synthetic four-species corpus
    GenFixtures {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        calls: Option<usize>,
        #[arg(long)]
        session_s: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        snr_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        snr_max: Option<f64>,
    },
}

/// Failure classes mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] callsift::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(&p)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        cfg.jobs = Some(j);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code());
        }
    };
    if cli.print_config {
        print!("{}", cfg.render());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand given (see --help)");
        return ExitCode::from(2);
    };
    if let Some(j) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = commands::run(&command, &cfg);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => e.code(),
    };
    if let Err(e) = runlog::append(&cfg, code) {
        eprintln!("warning: run log not written: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
