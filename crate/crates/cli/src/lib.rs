//! `lorafix` command-line front end.
//!
//! Exit codes: 0 success, 1 domain error (bad geometry, failed replay,
//! invalid scenario), 2 usage or input-file error.

pub mod commands;
pub mod reference_data;
pub mod replay;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Domain(_) => 1,
            Self::Usage(_) => 2,
        }
    }

    pub fn usage(msg: impl Into<anyhow::Error>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<anyhow::Error>) -> Self {
        Self::Domain(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(e) | Self::Domain(e) => write!(f, "{e:#}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lorafix",
    version,
    about = "RSSI-based UAV localization toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Path-loss model file (`L=<value>` / `C=<value>` lines).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a path-loss model from a `distance_m,mean_rssi_db` CSV.
    Fit {
        calibration_csv: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        min_exponent: f64,
        #[arg(long, default_value_t = 0.8)]
        min_r2: f64,
        /// Exit 1 when the calibration is rejected.
        #[arg(long)]
        strict: bool,
    },
    /// Predict mean RSSI at a distance.
    Predict {
        #[arg(long)]
        distance: f64,
    },
    /// Estimate slant distance from a mean RSSI value.
    Distance {
        #[arg(long, allow_negative_numbers = true)]
        rssi: f64,
    },
    /// Slant distance from ground distance, height and angle.
    Slant {
        #[arg(long)]
        gd: f64,
        #[arg(long)]
        height: f64,
        /// UAV–station angle in degrees.
        #[arg(long, conflicts_with = "alpha", required_unless_present = "alpha")]
        beta: Option<f64>,
        /// Ground-point elevation angle in degrees; beta = 90 − alpha.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Localize from a station registry and a report log.
    Locate {
        stations_csv: PathBuf,
        reports_csv: PathBuf,
    },
    /// Run a scenario and write sample, report and fix logs.
    Simulate { scenario: PathBuf },
    /// Recompute a field-trial table and diff it against the printed values.
    ReplayPaper {
        /// table2, table3, table5, fig6 or all
        which: String,
    },
    /// Accept live station streams over TCP and log fixes.
    Collect {
        stations_csv: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        /// Number of station connections to accept before aggregating.
        #[arg(long, default_value_t = 1)]
        streams: usize,
    },
}
