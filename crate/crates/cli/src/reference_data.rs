//! Transcribed field-trial tables, embedded so replays run offline.

use serde::Deserialize;

pub const TABLE2_CSV: &str = include_str!("../data/table2.csv");
pub const TABLE3_CSV: &str = include_str!("../data/table3.csv");
pub const TABLE3_FIT_CSV: &str = include_str!("../data/table3_fit.csv");
pub const TABLE4_CSV: &str = include_str!("../data/table4.csv");
pub const TABLE5_CSV: &str = include_str!("../data/table5.csv");
/// 200 m square used for the four-station field fix (GS1..GS4 around the square).
pub const FIELD_STATIONS_CSV: &str = include_str!("../data/field_stations.csv");

/// Slant-distance calibration positions.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SlantRow {
    pub nominal_m: f64,
    pub gd_m: f64,
    pub h_m: f64,
    pub beta_deg: f64,
    pub alpha_deg: f64,
    pub sd_m: f64,
}

/// Mean-RSSI statistics at each calibration distance.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct RssiStatsRow {
    pub nominal_m: f64,
    pub n: usize,
    pub variance: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub mean_db: f64,
    pub ci_lo_db: f64,
    pub ci_hi_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct FitRow {
    pub exponent: f64,
    pub intercept_db: f64,
    pub r_squared: f64,
}

/// Second-module readings that never formed a usable calibration.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct FlatRow {
    pub distance_m: f64,
    pub mean_db: f64,
    pub ci_lo_db: f64,
    pub ci_hi_db: f64,
}

/// Four-station field localization readings.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FieldRow {
    pub station_id: String,
    pub mean_rssi_db: f64,
    pub est_sd_m: f64,
    pub real_sd_m: f64,
    pub error_pct: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("embedded table is well-formed")
}

pub fn table2() -> Vec<SlantRow> {
    rows(TABLE2_CSV)
}

pub fn table3() -> Vec<RssiStatsRow> {
    rows(TABLE3_CSV)
}

pub fn table3_fit() -> FitRow {
    rows::<FitRow>(TABLE3_FIT_CSV)[0]
}

pub fn table4() -> Vec<FlatRow> {
    rows(TABLE4_CSV)
}

pub fn table5() -> Vec<FieldRow> {
    rows(TABLE5_CSV)
}
