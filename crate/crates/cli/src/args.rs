//! Command-line and config-file arguments. Every field is optional so that a
//! config document can supply it; defaults are applied after merging.

use std::path::PathBuf;

use chrono::{NaiveDate, NaiveTime};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use volcast::deepnet::LossKind;
use volcast::harness::{parse_models, GridCell, ModelSpec, StudyKind};
use volcast::synth::GarchTruth;

/// A comma-separated model list taken as one flag value, so that
/// `egarch(2,1)` keeps its comma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelList(pub Vec<ModelSpec>);

fn parse_model_list(s: &str) -> Result<ModelList, String> {
    parse_models(s).map(ModelList).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "volcast", version, about = "Day-ahead volatility forecasting from intraday bars")]
pub struct Cli {
    /// JSON run document (a previous run's meta.json works); flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, env = "VOLCAST_THREADS")]
    pub threads: Option<usize>,

    /// Log filter (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate GARCH(1,1) intraday price bars to CSV
    Simulate(SimulateArgs),
    /// Build a daily panel from a bar CSV
    Ingest(IngestArgs),
    /// Fit a classical variance model per ticker
    Fit(FitArgs),
    /// Train a DeepVol network on a panel
    Train(TrainCmdArgs),
    /// Run a study into a run directory
    Study(StudyArgs),
    /// Print the tables of a run directory
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Ingest(_) => "ingest",
            Command::Fit(_) => "fit",
            Command::Train(_) => "train",
            Command::Study(_) => "study",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionArgs {
    /// Session open, local time [default: 09:30:00]
    #[arg(long)]
    pub open: Option<NaiveTime>,
    /// Session close, local time [default: 16:00:00]
    #[arg(long)]
    pub close: Option<NaiveTime>,
    /// Local time minus UTC in minutes [default: -240]
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset_minutes: Option<i32>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Trading days per ticker [default: 250]
    #[arg(long)]
    pub days: Option<usize>,
    /// Number of tickers [default: 1]
    #[arg(long)]
    pub tickers: Option<usize>,
    /// Price bars per day, including the opening bar [default: 78]
    #[arg(long)]
    pub bars_per_day: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Daily GARCH intercept shared by all tickers [default: 0.05]
    #[arg(long)]
    pub omega: Option<f64>,
    /// Daily GARCH ARCH coefficient [default: 0.10]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Daily GARCH persistence coefficient [default: 0.85]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Apply a U-shaped intraday variance profile
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub diurnal: Option<bool>,
    /// First trading date [default: 2019-09-30]
    #[arg(long)]
    pub start_date: Option<NaiveDate>,
    /// Per-ticker parameters (config file only; overridden by --omega/--alpha/--beta)
    #[arg(skip)]
    pub params: Option<Vec<GarchTruth>>,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Output bar CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    /// Bar CSV with columns ticker,timestamp,price
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Intraday return granularities in minutes [default: 5]
    #[arg(long, value_delimiter = ',')]
    pub granularities: Option<Vec<u32>>,
    /// Granularity of the realised-variance proxy [default: 5]
    #[arg(long)]
    pub rv_granularity: Option<u32>,
    /// Days with more empty intervals than this fraction are dropped [default: 0.1]
    #[arg(long)]
    pub max_empty_fraction: Option<f64>,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Output panel JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Panel JSON
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Model name, e.g. garch, garch(2,1), igarch, egarch, heavy
    #[arg(long)]
    pub model: Option<String>,
    /// Tickers to fit [default: all]
    #[arg(long, value_delimiter = ',')]
    pub tickers: Option<Vec<String>>,
    /// Last date of the estimation sample [default: last panel date]
    #[arg(long)]
    pub train_end: Option<NaiveDate>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Network and optimiser settings; names follow the persisted training config.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArgs {
    /// Receptive field in days [default: 1]
    #[arg(long = "receptive-field")]
    pub receptive_field_days: Option<usize>,
    /// Input sampling granularity in minutes [default: 5]
    #[arg(long)]
    pub granularity: Option<u32>,
    /// ADAM learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum training epochs [default: 200]
    #[arg(long = "epochs")]
    pub max_epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of training dates held out for early stopping [default: 0.2]
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Training loss: qlike or rmse [default: qlike]
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Convolution channels [default: 8]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Convolution kernel width [default: 2]
    #[arg(long)]
    pub kernel_width: Option<usize>,
    /// Layer count [default: smallest covering the input window]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Add the lagged-RV fusion term
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fusion: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdArgs {
    /// Panel JSON
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Tickers to train on [default: all]
    #[arg(long, value_delimiter = ',')]
    pub tickers: Option<Vec<String>>,
    /// Last target date used for training [default: last panel date]
    #[arg(long)]
    pub train_end: Option<NaiveDate>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub net: NetArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyArgs {
    /// oos, grid, linearity or generalisation
    #[arg(long)]
    pub kind: Option<StudyKind>,
    /// Panel JSON
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Last training date
    #[arg(long)]
    pub train_end: Option<NaiveDate>,
    /// Last test date [default: last panel date]
    #[arg(long)]
    pub test_end: Option<NaiveDate>,
    /// Models to compare [default: martingale,garch,heavy,deepvol]
    #[arg(long, value_parser = parse_model_list)]
    pub models: Option<ModelList>,
    /// DeepVol training tickers for generalisation [default: first half]
    #[arg(long, value_delimiter = ',')]
    pub train_tickers: Option<Vec<String>>,
    /// Held-out tickers for generalisation [default: the rest]
    #[arg(long, value_delimiter = ',')]
    pub test_tickers: Option<Vec<String>>,
    /// Receptive fields of the linearity study [default: 1,2,3]
    #[arg(long, value_delimiter = ',')]
    pub receptive_fields: Option<Vec<usize>>,
    /// Grid cells (config file only) [default: the standard grid]
    #[arg(skip)]
    pub grid: Option<Vec<GridCell>>,
    /// Study seed; DeepVol runs derive their seeds from it [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub net: NetArgs,
    /// Output run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Run directory written by `study`
    #[arg(long)]
    pub run: Option<PathBuf>,
}
