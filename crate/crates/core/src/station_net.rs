//! Ground-station to collector data path.
//!
//! Stations emit one CSV line per completed averaging window:
//!
//! ```text
//! station_id,uav_id,window_end_s,mean_rssi_db,sample_count
//! GS1,FF1,120.0,-80.00,5
//! ```
//!
//! The [`Collector`] keeps a [`FusionWindow`] per UAV holding the newest
//! report from each station. When a UAV's reporting epoch closes with at
//! least four fresh stations, their ranges are trilaterated and a
//! [`FixRecord`] is emitted. All fusion state is mutated from one place, so
//! the fix sequence depends only on the order lines are fed in.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Position3D;
use crate::pathloss::{DistanceEstimate, PathLossError, PathLossModel};
use crate::trilateration::{
    locate, LocateOutcome, SphereConstraint, TrilaterationError, MIN_STATIONS,
};

#[derive(Debug, Error)]
pub enum StationNetError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(reason: impl Into<String>) -> StationNetError {
    StationNetError::MalformedLine {
        line: 0,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationReport {
    pub station_id: String,
    pub uav_id: String,
    pub window_end_s: f64,
    pub mean_rssi_db: f64,
    pub sample_count: usize,
}

/// Shortest round-trip decimal, padded to at least `min_decimals` places.
fn fmt_decimal(v: f64, min_decimals: usize) -> String {
    let mut s = format!("{v}");
    let decimals = s.split_once('.').map_or(0, |(_, frac)| frac.len());
    if decimals == 0 {
        s.push('.');
    }
    s.extend(std::iter::repeat_n(
        '0',
        min_decimals.saturating_sub(decimals),
    ));
    s
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_graphic() && b != b',')
}

impl StationReport {
    /// One newline-terminated report line.
    pub fn encode(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.station_id,
            self.uav_id,
            fmt_decimal(self.window_end_s, 1),
            fmt_decimal(self.mean_rssi_db, 2),
            self.sample_count
        )
    }

    pub fn parse(line: &str) -> Result<Self, StationNetError> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split(',').collect();
        let [station_id, uav_id, end, rssi, count] = fields[..] else {
            return Err(malformed(format!(
                "expected 5 fields, got {}",
                fields.len()
            )));
        };
        if !valid_token(station_id) || !valid_token(uav_id) {
            return Err(malformed("empty or invalid id field"));
        }
        let number = |name: &str, v: &str| -> Result<f64, StationNetError> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| malformed(format!("{name} {v:?} is not a finite number")))
        };
        let window_end_s = number("window_end_s", end)?;
        if window_end_s < 0.0 {
            return Err(malformed("window_end_s is negative"));
        }
        let mean_rssi_db = number("mean_rssi_db", rssi)?;
        let sample_count: usize = count.parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
            malformed(format!("sample_count {count:?} is not a positive integer"))
        })?;
        Ok(Self {
            station_id: station_id.to_string(),
            uav_id: uav_id.to_string(),
            window_end_s,
            mean_rssi_db,
            sample_count,
        })
    }
}

/// Parses a whole report log; blank lines and a leading header are skipped.
pub fn parse_report_log(text: &str) -> Result<Vec<StationReport>, StationNetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("station_id,")) {
            continue;
        }
        let r = StationReport::parse(line).map_err(|e| match e {
            StationNetError::MalformedLine { reason, .. } => StationNetError::MalformedLine {
                line: i + 1,
                reason,
            },
            other => other,
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Known station positions, keyed by station id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationRegistry {
    stations: BTreeMap<String, Position3D>,
}

#[derive(Deserialize)]
struct RegistryRow {
    station_id: String,
    x_m: f64,
    y_m: f64,
    z_m: f64,
}

impl StationRegistry {
    pub fn insert(&mut self, id: impl Into<String>, position: Position3D) {
        self.stations.insert(id.into(), position);
    }

    pub fn get(&self, id: &str) -> Option<&Position3D> {
        self.stations.get(id)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Position3D)> {
        self.stations.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Reads `station_id,x_m,y_m,z_m` CSV with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, StationNetError> {
        let mut registry = Self::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (i, row) in rdr.deserialize::<RegistryRow>().enumerate() {
            let row = row?;
            let p = Position3D::new(row.x_m, row.y_m, row.z_m);
            if !valid_token(&row.station_id) || !p.is_finite() {
                return Err(StationNetError::MalformedLine {
                    line: i + 2,
                    reason: format!("invalid station row {:?}", row.station_id),
                });
            }
            if registry
                .stations
                .insert(row.station_id.clone(), p)
                .is_some()
            {
                return Err(StationNetError::MalformedLine {
                    line: i + 2,
                    reason: format!("duplicate station {}", row.station_id),
                });
            }
        }
        Ok(registry)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("station_id,x_m,y_m,z_m\n");
        for (id, p) in &self.stations {
            out.push_str(&format!("{id},{},{},{}\n", p.x, p.y, p.z));
        }
        out
    }
}

impl FromIterator<(String, Position3D)> for StationRegistry {
    fn from_iter<T: IntoIterator<Item = (String, Position3D)>>(iter: T) -> Self {
        Self {
            stations: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Reports older than this, relative to the newest held one, are dropped.
    pub max_age_s: f64,
    /// Reports within this span of an epoch's first report belong to it.
    pub epoch_gap_s: f64,
    pub min_stations: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            max_age_s: 30.0,
            epoch_gap_s: 1.0,
            min_stations: MIN_STATIONS,
        }
    }
}

/// Freshest report per station for one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWindow {
    pub uav_id: String,
    reports: BTreeMap<String, StationReport>,
    epoch_start_s: Option<f64>,
}

impl FusionWindow {
    fn new(uav_id: &str) -> Self {
        Self {
            uav_id: uav_id.to_string(),
            reports: BTreeMap::new(),
            epoch_start_s: None,
        }
    }

    pub fn station_count(&self) -> usize {
        self.reports.len()
    }

    pub fn reports(&self) -> impl Iterator<Item = &StationReport> {
        self.reports.values()
    }

    fn newest_s(&self) -> Option<f64> {
        self.reports
            .values()
            .map(|r| r.window_end_s)
            .reduce(f64::max)
    }

    fn evict_stale(&mut self, max_age_s: f64) {
        if let Some(newest) = self.newest_s() {
            self.reports
                .retain(|_, r| newest - r.window_end_s <= max_age_s);
        }
    }

    fn insert(&mut self, report: StationReport, max_age_s: f64) {
        match self.reports.get(&report.station_id) {
            Some(old) if old.window_end_s > report.window_end_s => {}
            _ => {
                self.reports.insert(report.station_id.clone(), report);
            }
        }
        self.evict_stale(max_age_s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeEstimate {
    pub station_id: String,
    pub distance: DistanceEstimate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixFailure {
    #[error(transparent)]
    Locate(#[from] TrilaterationError),
    #[error(transparent)]
    Range(#[from] PathLossError),
}

impl FixFailure {
    pub fn status(&self) -> &'static str {
        match self {
            Self::Locate(TrilaterationError::ImaginaryHeight { .. }) => "imaginary_height",
            Self::Locate(TrilaterationError::SingularSystem { .. }) => "singular_system",
            Self::Locate(TrilaterationError::TooFewStations(_)) => "too_few_stations",
            Self::Locate(TrilaterationError::DuplicateStation(..)) => "duplicate_station",
            Self::Locate(TrilaterationError::InvalidRadius(_)) => "invalid_radius",
            Self::Locate(TrilaterationError::NotCoplanar) => "not_coplanar",
            Self::Range(_) => "degenerate_model",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixRecord {
    pub uav_id: String,
    /// Newest contributing report's `window_end_s`.
    pub time_s: f64,
    pub result: Result<LocateOutcome, FixFailure>,
    pub reports: Vec<StationReport>,
    pub ranges: Vec<RangeEstimate>,
}

pub const FIX_LOG_HEADER: &str = "uav_id,x_m,y_m,z_m,residual_m,path,status\n";

impl FixRecord {
    pub fn status(&self) -> &'static str {
        match &self.result {
            Ok(_) => "ok",
            Err(e) => e.status(),
        }
    }

    /// One fix-log line; failed fixes leave the numeric columns empty.
    pub fn log_line(&self) -> String {
        match &self.result {
            Ok(o) => format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},ok\n",
                self.uav_id,
                o.position.x,
                o.position.y,
                o.position.z,
                o.residual_norm_m,
                o.path.as_str()
            ),
            Err(e) => format!("{},,,,,,{}\n", self.uav_id, e.status()),
        }
    }
}

impl fmt::Display for FixRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.result {
            Ok(o) => write!(
                f,
                "{} @ {:.1} s: ({:.2}, {:.2}, {:.2}) m, residual {:.3} m, {}",
                self.uav_id,
                self.time_s,
                o.position.x,
                o.position.y,
                o.position.z,
                o.residual_norm_m,
                o.path.as_str()
            ),
            Err(e) => write!(f, "{} @ {:.1} s: failed ({e})", self.uav_id, self.time_s),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub accepted: usize,
    pub unknown_station: usize,
    pub malformed: usize,
}

/// Single-writer fusion state over any number of station streams.
#[derive(Debug, Clone)]
pub struct Collector {
    registry: StationRegistry,
    model: PathLossModel,
    config: FusionConfig,
    windows: BTreeMap<String, FusionWindow>,
    stats: IngestStats,
}

impl Collector {
    pub fn new(registry: StationRegistry, model: PathLossModel, config: FusionConfig) -> Self {
        Self {
            registry,
            model,
            config,
            windows: BTreeMap::new(),
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn window(&self, uav_id: &str) -> Option<&FusionWindow> {
        self.windows.get(uav_id)
    }

    /// Feeds one raw line; malformed lines are counted and skipped.
    pub fn push_line(&mut self, line: &str) -> Vec<FixRecord> {
        if line.trim().is_empty() || line.starts_with("station_id,") {
            return Vec::new();
        }
        match StationReport::parse(line) {
            Ok(r) => self.push_report(r),
            Err(_) => {
                self.stats.malformed += 1;
                Vec::new()
            }
        }
    }

    pub fn push_report(&mut self, report: StationReport) -> Vec<FixRecord> {
        if self.registry.get(&report.station_id).is_none() {
            self.stats.unknown_station += 1;
            return Vec::new();
        }
        self.stats.accepted += 1;
        let config = self.config;
        let window = self
            .windows
            .entry(report.uav_id.clone())
            .or_insert_with(|| FusionWindow::new(&report.uav_id));

        let mut fixes = Vec::new();
        match window.epoch_start_s {
            Some(start) if report.window_end_s > start + config.epoch_gap_s => {
                fixes.extend(close_epoch(window, &self.registry, &self.model, &config));
                window.epoch_start_s = Some(report.window_end_s);
            }
            None => window.epoch_start_s = Some(report.window_end_s),
            _ => {}
        }
        window.insert(report, config.max_age_s);
        fixes
    }

    /// Closes every open epoch, e.g. at end of stream.
    pub fn flush(&mut self) -> Vec<FixRecord> {
        let mut fixes = Vec::new();
        for window in self.windows.values_mut() {
            fixes.extend(close_epoch(
                window,
                &self.registry,
                &self.model,
                &self.config,
            ));
            window.epoch_start_s = None;
        }
        fixes
    }
}

fn close_epoch(
    window: &mut FusionWindow,
    registry: &StationRegistry,
    model: &PathLossModel,
    config: &FusionConfig,
) -> Option<FixRecord> {
    window.evict_stale(config.max_age_s);
    if window.station_count() < config.min_stations.max(MIN_STATIONS) {
        return None;
    }
    let reports: Vec<StationReport> = std::mem::take(&mut window.reports).into_values().collect();
    let time_s = reports
        .iter()
        .map(|r| r.window_end_s)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut ranges = Vec::with_capacity(reports.len());
    let mut constraints = Vec::with_capacity(reports.len());
    let mut failure = None;
    for r in &reports {
        let position = *registry.get(&r.station_id).expect("filtered on insert");
        match model.estimate_distance(r.mean_rssi_db) {
            Ok(d) => {
                ranges.push(RangeEstimate {
                    station_id: r.station_id.clone(),
                    distance: d,
                });
                match SphereConstraint::new(r.station_id.clone(), position, d.meters) {
                    Ok(c) => constraints.push(c),
                    Err(e) => failure = failure.or(Some(FixFailure::from(e))),
                }
            }
            Err(e) => failure = failure.or(Some(FixFailure::from(e))),
        }
    }
    let result = match failure {
        Some(f) => Err(f),
        None => locate(&constraints).map_err(FixFailure::from),
    };
    Some(FixRecord {
        uav_id: window.uav_id.clone(),
        time_s,
        result,
        reports,
        ranges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestResult {
    pub fixes: Vec<FixRecord>,
    pub stats: IngestStats,
}

/// Batch ingestion of report lines in the given order, flushed at the end.
pub fn ingest<I, S>(
    lines: I,
    registry: &StationRegistry,
    model: PathLossModel,
    config: FusionConfig,
) -> IngestResult
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut collector = Collector::new(registry.clone(), model, config);
    let mut fixes = Vec::new();
    for line in lines {
        fixes.extend(collector.push_line(line.as_ref()));
    }
    fixes.extend(collector.flush());
    IngestResult {
        fixes,
        stats: collector.stats(),
    }
}

/// Ingests newline-delimited reports from any byte stream.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    registry: &StationRegistry,
    model: PathLossModel,
    config: FusionConfig,
) -> Result<IngestResult, StationNetError> {
    let lines = reader.lines().collect::<Result<Vec<_>, _>>()?;
    Ok(ingest(lines, registry, model, config))
}

pub fn write_fix_log<W: Write>(mut out: W, fixes: &[FixRecord]) -> io::Result<()> {
    out.write_all(FIX_LOG_HEADER.as_bytes())?;
    for f in fixes {
        out.write_all(f.log_line().as_bytes())?;
    }
    Ok(())
}

/// Accepts `streams` TCP connections and funnels every line through one
/// collector. Lines are processed in arrival order; fixes are handed to
/// `on_fix` as they are produced and the collector is flushed once every
/// stream has closed.
pub fn serve_tcp<F>(
    listener: TcpListener,
    streams: usize,
    registry: StationRegistry,
    model: PathLossModel,
    config: FusionConfig,
    mut on_fix: F,
) -> Result<IngestStats, StationNetError>
where
    F: FnMut(&FixRecord),
{
    let (tx, rx) = mpsc::channel::<String>();
    let mut readers = Vec::with_capacity(streams);
    for _ in 0..streams {
        let (socket, _) = listener.accept()?;
        let tx = tx.clone();
        readers.push(thread::spawn(move || read_stream(socket, tx)));
    }
    drop(tx);

    let mut collector = Collector::new(registry, model, config);
    for line in rx {
        for fix in collector.push_line(&line) {
            on_fix(&fix);
        }
    }
    for fix in collector.flush() {
        on_fix(&fix);
    }
    for r in readers {
        r.join().expect("reader thread panicked")?;
    }
    Ok(collector.stats())
}

fn read_stream(socket: TcpStream, tx: mpsc::Sender<String>) -> io::Result<()> {
    for line in BufReader::new(socket).lines() {
        if tx.send(line?).is_err() {
            break;
        }
    }
    Ok(())
}
