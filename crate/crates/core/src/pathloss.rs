//! Log-distance path-loss model.
//!
//! The model maps slant distance `d` (meters) to expected received power:
//!
//! ```text
//! rssi = -10 * L * log10(d) + C
//! ```
//!
//! `L` is the path-loss exponent and `C` the regression intercept in dB, i.e.
//! the expected RSSI at 1 m. Calibration fits `(L, C)` by ordinary least
//! squares of mean RSSI on `log10(d)`.

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

/// Distances below this are flagged as low-confidence estimates.
pub const LOW_CONFIDENCE_BELOW_M: f64 = 100.0;

/// Default number of raw samples averaged into one mean RSSI value.
pub const DEFAULT_WINDOW_SIZE: usize = 5;

/// z-multiplier for the two-sided 95% confidence interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathLossError {
    #[error("cannot average an empty sample window")]
    EmptyWindow,
    #[error("samples in one window come from different sources ({0})")]
    MixedSource(String),
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("path-loss exponent is zero; model cannot be inverted")]
    DegenerateModel,
    #[error("need at least 2 calibration points, got {0}")]
    InsufficientPoints(usize),
    #[error("all calibration points share one distance")]
    ZeroVarianceInDistance,
    #[error("need at least 2 samples for descriptive statistics, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value in input: {0}")]
    NonFinite(&'static str),
    #[error("malformed model text: {0}")]
    MalformedModel(String),
    #[error("calibration CSV: {0}")]
    Csv(String),
}

/// One raw signal-strength reading at a ground station.
#[derive(Debug, Clone, PartialEq)]
pub struct RssiSample {
    pub station_id: String,
    pub uav_id: String,
    pub rssi_db: f64,
    pub timestamp_s: f64,
}

impl RssiSample {
    pub fn new(
        station_id: impl Into<String>,
        uav_id: impl Into<String>,
        rssi_db: f64,
        timestamp_s: f64,
    ) -> Result<Self, PathLossError> {
        if !rssi_db.is_finite() {
            return Err(PathLossError::NonFinite("rssi_db"));
        }
        if !timestamp_s.is_finite() || timestamp_s < 0.0 {
            return Err(PathLossError::NonFinite("timestamp_s"));
        }
        Ok(Self {
            station_id: station_id.into(),
            uav_id: uav_id.into(),
            rssi_db,
            timestamp_s,
        })
    }
}

/// Average of one window of raw samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRssi {
    pub value_db: f64,
    pub sample_count: usize,
    pub window_start_s: f64,
    pub window_end_s: f64,
}

/// Averages a window of samples that all come from one station/UAV pair.
pub fn mean_rssi(samples: &[RssiSample]) -> Result<MeanRssi, PathLossError> {
    let first = samples.first().ok_or(PathLossError::EmptyWindow)?;
    if let Some(odd) = samples
        .iter()
        .find(|s| s.station_id != first.station_id || s.uav_id != first.uav_id)
    {
        return Err(PathLossError::MixedSource(format!(
            "{}/{} vs {}/{}",
            first.station_id, first.uav_id, odd.station_id, odd.uav_id
        )));
    }
    let sum: f64 = samples.iter().map(|s| s.rssi_db).sum();
    let (start, end) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.timestamp_s), hi.max(s.timestamp_s))
        });
    Ok(MeanRssi {
        value_db: sum / samples.len() as f64,
        sample_count: samples.len(),
        window_start_s: start,
        window_end_s: end,
    })
}

#[derive(Deserialize)]
struct CalibrationRow {
    distance_m: f64,
    mean_rssi_db: f64,
}

/// Reads `distance_m,mean_rssi_db` CSV (header required).
pub fn read_calibration_csv<R: std::io::Read>(
    reader: R,
) -> Result<Vec<CalibrationPoint>, PathLossError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PathLossError::Csv(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["distance_m", "mean_rssi_db"] {
        return Err(PathLossError::Csv(format!(
            "expected header distance_m,mean_rssi_db, got {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize::<CalibrationRow>()
        .map(|row| {
            let row = row.map_err(|e| PathLossError::Csv(e.to_string()))?;
            CalibrationPoint::new(row.distance_m, row.mean_rssi_db)
        })
        .collect()
}

/// Calibrated `(L, C)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    /// Path-loss exponent (dimensionless).
    pub exponent: f64,
    /// Intercept in dB: expected RSSI at 1 m.
    pub intercept_db: f64,
}

/// Distance recovered from a mean RSSI value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub meters: f64,
    /// Set when the estimate falls below [`LOW_CONFIDENCE_BELOW_M`].
    pub low_confidence: bool,
}

impl PathLossModel {
    pub const fn new(exponent: f64, intercept_db: f64) -> Self {
        Self {
            exponent,
            intercept_db,
        }
    }

    pub fn predict_rssi(&self, distance_m: f64) -> Result<f64, PathLossError> {
        if !(distance_m > 0.0) {
            return Err(PathLossError::NonPositiveDistance(distance_m));
        }
        Ok(-10.0 * self.exponent * distance_m.log10() + self.intercept_db)
    }

    pub fn estimate_distance(&self, mean_rssi_db: f64) -> Result<DistanceEstimate, PathLossError> {
        if self.exponent == 0.0 {
            return Err(PathLossError::DegenerateModel);
        }
        let meters = 10f64.powf(-(mean_rssi_db - self.intercept_db) / (10.0 * self.exponent));
        Ok(DistanceEstimate {
            meters,
            low_confidence: meters < LOW_CONFIDENCE_BELOW_M,
        })
    }
}

impl fmt::Display for PathLossModel {
    /// Model file text: `L=<value>\nC=<value>\n`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "L={}", self.exponent)?;
        writeln!(f, "C={}", self.intercept_db)
    }
}

impl FromStr for PathLossModel {
    type Err = PathLossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut exponent = None;
        let mut intercept = None;
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PathLossError::MalformedModel(line.to_string()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| PathLossError::MalformedModel(line.to_string()))?;
            match key.trim() {
                "L" => exponent = Some(value),
                "C" => intercept = Some(value),
                other => {
                    return Err(PathLossError::MalformedModel(format!(
                        "unknown key {other}"
                    )))
                }
            }
        }
        match (exponent, intercept) {
            (Some(l), Some(c)) if l.is_finite() && c.is_finite() => Ok(Self::new(l, c)),
            _ => Err(PathLossError::MalformedModel(
                "expected both L= and C=".into(),
            )),
        }
    }
}

/// A known distance and the mean RSSI observed there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub slant_distance_m: f64,
    pub mean_rssi_db: f64,
}

impl CalibrationPoint {
    pub fn new(slant_distance_m: f64, mean_rssi_db: f64) -> Result<Self, PathLossError> {
        if !(slant_distance_m > 0.0) || !slant_distance_m.is_finite() {
            return Err(PathLossError::NonPositiveDistance(slant_distance_m));
        }
        if !mean_rssi_db.is_finite() {
            return Err(PathLossError::NonFinite("mean_rssi_db"));
        }
        Ok(Self {
            slant_distance_m,
            mean_rssi_db,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    /// dB per decade of distance.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// `observed - fitted` per input point, in input order.
    pub residuals_db: Vec<f64>,
}

/// Fits `(L, C)` by least squares of RSSI on `log10(distance)`.
pub fn fit_model(
    points: &[CalibrationPoint],
) -> Result<(PathLossModel, RegressionReport), PathLossError> {
    if points.len() < 2 {
        return Err(PathLossError::InsufficientPoints(points.len()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.slant_distance_m.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_rssi_db).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;

    // Centered sums keep precision when log10(d) sits far from zero.
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();

    let x_scale = xs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if sxx <= (f64::EPSILON * x_scale).powi(2) * n {
        return Err(PathLossError::ZeroVarianceInDistance);
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residuals_db: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    let sse: f64 = residuals_db.iter().map(|r| r * r).sum();
    // A flat response (syy == 0) is fitted exactly by slope 0.
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let model = PathLossModel::new(-slope / 10.0, intercept);
    let report = RegressionReport {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
        residuals_db,
    };
    Ok((model, report))
}

/// Thresholds a calibration must clear before it is used for ranging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCriteria {
    pub min_exponent: f64,
    pub min_r_squared: f64,
}

impl Default for CalibrationCriteria {
    fn default() -> Self {
        Self {
            min_exponent: 0.1,
            min_r_squared: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationVerdict {
    Usable,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectReason {
    /// RSSI barely (or never) falls with distance.
    ExponentTooSmall {
        exponent: f64,
        min: f64,
    },
    PoorFit {
        r_squared: f64,
        min: f64,
    },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExponentTooSmall { exponent, min } => {
                write!(f, "path-loss exponent {exponent:.4} is not above {min}")
            }
            Self::PoorFit { r_squared, min } => {
                write!(f, "R² {r_squared:.4} is below {min}")
            }
        }
    }
}

pub fn assess_calibration(
    report: &RegressionReport,
    model: &PathLossModel,
    criteria: &CalibrationCriteria,
) -> CalibrationVerdict {
    if model.exponent <= criteria.min_exponent {
        return CalibrationVerdict::Rejected(RejectReason::ExponentTooSmall {
            exponent: model.exponent,
            min: criteria.min_exponent,
        });
    }
    if report.r_squared < criteria.min_r_squared {
        return CalibrationVerdict::Rejected(RejectReason::PoorFit {
            r_squared: report.r_squared,
            min: criteria.min_r_squared,
        });
    }
    CalibrationVerdict::Usable
}

/// Descriptive statistics with a z-based 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub sample_variance: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl SampleStats {
    /// Builds the summary from already-known `(n, mean, std_dev)`.
    pub fn from_summary(n: usize, mean: f64, std_dev: f64) -> Result<Self, PathLossError> {
        if n < 2 {
            return Err(PathLossError::TooFewSamples(n));
        }
        if !mean.is_finite() || !std_dev.is_finite() || std_dev < 0.0 {
            return Err(PathLossError::NonFinite("summary"));
        }
        let std_err = std_dev / (n as f64).sqrt();
        Ok(Self {
            n,
            mean,
            sample_variance: std_dev * std_dev,
            std_dev,
            std_err,
            ci95_lo: mean - Z_95 * std_err,
            ci95_hi: mean + Z_95 * std_err,
        })
    }

    /// True iff the two closed 95% intervals share at least one point.
    pub fn ci_overlaps(&self, other: &SampleStats) -> bool {
        ci_overlap(self, other)
    }
}

pub fn describe_samples(values: &[f64]) -> Result<SampleStats, PathLossError> {
    let n = values.len();
    if n < 2 {
        return Err(PathLossError::TooFewSamples(n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PathLossError::NonFinite("sample value"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_dev = variance.sqrt();
    let std_err = std_dev / (n as f64).sqrt();
    Ok(SampleStats {
        n,
        mean,
        sample_variance: variance,
        std_dev,
        std_err,
        ci95_lo: mean - Z_95 * std_err,
        ci95_hi: mean + Z_95 * std_err,
    })
}

pub fn ci_overlap(a: &SampleStats, b: &SampleStats) -> bool {
    a.ci95_lo <= b.ci95_hi && b.ci95_lo <= a.ci95_hi
}
