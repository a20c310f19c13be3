//! `regimecast`: command-line pipeline from synthetic or gridded inputs to
//! forecast skill reports.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regimecast::models::{ModelKind, Profile};

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Missing inputs or bad arguments (exit 2).
    Usage(String),
    /// Inputs that fail validation (exit 3).
    Validation(String),
    /// Numerical breakdown (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn input(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("cannot read {}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("cannot write {}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<regimecast::Error> for CliError {
    fn from(e: regimecast::Error) -> Self {
        match &e {
            regimecast::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            regimecast::Error::Argument(_) => CliError::Usage(e.to_string()),
            _ if e.is_validation() => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "regimecast", version, about = "Subseasonal weather-regime forecasting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON config; each command reads the section named after it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model size preset.
    #[arg(long, global = true, default_value = "desk", value_parser = parse_profile)]
    pub profile: Profile,
    /// Days between consecutive window anchors, overriding the config.
    #[arg(long, global = true)]
    pub stride_days: Option<usize>,
    /// Confidence percentile for forecasts of opportunity.
    #[arg(long, global = true)]
    pub percentile: Option<f64>,
    /// Worker threads for ensemble members.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Manifest path; defaults to `manifest.json` in the output directory or
    /// `<output>.manifest.json` next to an output file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: regimecast::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown model {s:?}; expected lstm, index_lstm, vit_lstm, logistic, persistence or climatology")
    })
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world with planted teleconnections.
    Synth {
        /// Directory for the generated fields, series and truth labels.
        out_dir: PathBuf,
        /// Number of winters, overriding the config.
        #[arg(long)]
        winters: Option<usize>,
    },
    /// Regrid, smooth and convert a field to day-of-year anomalies.
    Preprocess {
        /// Daily gridded field.
        input: PathBuf,
        /// Anomaly field to write.
        output: PathBuf,
    },
    /// Fit EOFs to an anomaly field and write the basis as JSON.
    Eof {
        /// Anomaly field.
        anomalies: PathBuf,
        /// EOF basis JSON to write.
        output: PathBuf,
    },
    /// Fit the regime model (EOF plus k-means) and label every day.
    Cluster {
        /// Anomaly field.
        anomalies: PathBuf,
        /// Reference regime patterns used to name the clusters.
        references: PathBuf,
        /// Directory for the regime model and daily labels.
        out_dir: PathBuf,
    },
    /// Compute the SPV index and MJO phases.
    Indices {
        /// Daily 10 hPa zonal wind field.
        u10: PathBuf,
        /// Daily RMM components (date, rmm1, rmm2).
        rmm: PathBuf,
        /// Directory for spv.csv and mjo.csv.
        out_dir: PathBuf,
    },
    /// Cut regime sequences into input/target windows with splits.
    Windows {
        /// Daily regime labels.
        regimes: PathBuf,
        /// Window JSON to write.
        output: PathBuf,
    },
    /// Train and test a single model member.
    Train {
        /// Daily regime labels.
        regimes: PathBuf,
        /// Directory with u10.grd, olr.grd and rmm.csv.
        drivers: PathBuf,
        /// Directory for the checkpoint, records and report.
        out_dir: PathBuf,
        /// Model to train.
        #[arg(long, default_value = "lstm", value_parser = parse_model)]
        model: ModelKind,
    },
    /// Train and test deep ensembles of one or more models.
    Ensemble {
        /// Daily regime labels.
        regimes: PathBuf,
        /// Directory with u10.grd, olr.grd and rmm.csv.
        drivers: PathBuf,
        /// Directory for per-model checkpoints, records and summaries.
        out_dir: PathBuf,
        /// Models to run; defaults to the config list.
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Vec<ModelKind>,
        /// Members per model; defaults to the profile size.
        #[arg(long)]
        members: Option<usize>,
    },
    /// Tune learning rate and dropout by Bayesian optimization on validation skill.
    Bo {
        /// Daily regime labels.
        regimes: PathBuf,
        /// Directory with u10.grd, olr.grd and rmm.csv.
        drivers: PathBuf,
        /// Search result JSON to write.
        output: PathBuf,
        /// Model to tune.
        #[arg(long, default_value = "lstm", value_parser = parse_model)]
        model: ModelKind,
    },
    /// Score forecast records.
    Evaluate {
        /// Forecast records JSON.
        records: PathBuf,
        /// Skill report JSON to write.
        output: PathBuf,
    },
    /// Forecasts of opportunity, precursor frequencies and driver composites.
    Precursors {
        /// Forecast records JSON.
        records: PathBuf,
        /// Daily regime labels.
        regimes: PathBuf,
        /// Directory with u10.grd, olr.grd and rmm.csv.
        drivers: PathBuf,
        /// Directory for opportunity, precursor and composite tables.
        out_dir: PathBuf,
    },
    /// Merge JSON results and plot-data CSVs into one bundle.
    Report {
        /// Bundle directory.
        out_dir: PathBuf,
        /// JSON results and CSV plot data to merge.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(manifest) => {
            eprintln!("manifest: {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
