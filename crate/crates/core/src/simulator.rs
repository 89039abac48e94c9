//! Deterministic RSSI field simulator.
//!
//! A [`Scenario`] describes fixed ground stations, a UAV that hovers at a
//! sequence of waypoints, the true path-loss model and a distance-dependent
//! Gaussian noise profile. [`simulate`] turns it into one ordered sample
//! stream per station, and [`collect_reports`] folds the streams into the
//! mean-RSSI report lines the collector consumes.
//!
//! Every emission draws from its own generator seeded by
//! `(seed, station_id, emission index)`, so streams do not depend on the
//! order stations are visited or on how many threads run.

use std::collections::BTreeMap;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Position3D;
use crate::pathloss::{mean_rssi, PathLossModel, RssiSample};
use crate::remote_id::{BroadcastSchedule, MessageFormat, UavId};
use crate::station_net::{FusionConfig, StationRegistry, StationReport};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseAnchor {
    pub distance_m: f64,
    pub std_dev_db: f64,
}

impl From<(f64, f64)> for NoiseAnchor {
    fn from((distance_m, std_dev_db): (f64, f64)) -> Self {
        Self {
            distance_m,
            std_dev_db,
        }
    }
}

/// Per-sample noise standard deviation as a function of slant distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    #[serde(with = "anchor_pairs")]
    pub anchors: Vec<NoiseAnchor>,
    #[serde(default)]
    pub per_format_offset_db: BTreeMap<MessageFormat, f64>,
}

mod anchor_pairs {
    use super::NoiseAnchor;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(anchors: &[NoiseAnchor], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = anchors
            .iter()
            .map(|a| [a.distance_m, a.std_dev_db])
            .collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<NoiseAnchor>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[a, b]| (a, b).into()).collect())
    }
}

/// Field-measured spread of RSSI, keyed by calibrated slant distance.
pub const FIELD_NOISE_ANCHORS: [(f64, f64); 6] = [
    (102.97, 2.19),
    (199.19, 1.53),
    (298.19, 1.62),
    (398.15, 1.21),
    (498.34, 1.14),
    (598.29, 1.10),
];

impl NoiseProfile {
    pub fn new(anchors: Vec<NoiseAnchor>) -> Result<Self, ScenarioError> {
        let p = Self {
            anchors,
            per_format_offset_db: BTreeMap::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn field() -> Self {
        Self {
            anchors: FIELD_NOISE_ANCHORS.iter().map(|&a| a.into()).collect(),
            per_format_offset_db: BTreeMap::new(),
        }
    }

    pub fn silent() -> Self {
        Self {
            anchors: vec![NoiseAnchor {
                distance_m: 1.0,
                std_dev_db: 0.0,
            }],
            per_format_offset_db: BTreeMap::new(),
        }
    }

    pub fn offset_db(&self, format: MessageFormat) -> f64 {
        self.per_format_offset_db
            .get(&format)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.anchors.is_empty() {
            return Err(invalid("noise profile needs at least one anchor"));
        }
        for a in &self.anchors {
            if !(a.distance_m > 0.0) || !a.distance_m.is_finite() {
                return Err(invalid(format!(
                    "noise anchor distance {} must be positive",
                    a.distance_m
                )));
            }
            if !(a.std_dev_db >= 0.0) || !a.std_dev_db.is_finite() {
                return Err(invalid(format!(
                    "noise std dev {} must be non-negative",
                    a.std_dev_db
                )));
            }
        }
        if self
            .anchors
            .windows(2)
            .any(|w| w[1].distance_m <= w[0].distance_m)
        {
            return Err(invalid(
                "noise anchor distances must be strictly increasing",
            ));
        }
        if self.per_format_offset_db.values().any(|v| !v.is_finite()) {
            return Err(invalid("per-format offsets must be finite"));
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation between anchors, clamped at both ends.
pub fn sigma_at(profile: &NoiseProfile, distance_m: f64) -> f64 {
    let anchors = &profile.anchors;
    let (first, last) = match (anchors.first(), anchors.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return 0.0,
    };
    if distance_m <= first.distance_m {
        return first.std_dev_db;
    }
    if distance_m >= last.distance_m {
        return last.std_dev_db;
    }
    let i = anchors.partition_point(|a| a.distance_m <= distance_m);
    let (lo, hi) = (anchors[i - 1], anchors[i]);
    let t = (distance_m - lo.distance_m) / (hi.distance_m - lo.distance_m);
    lo.std_dev_db + t * (hi.std_dev_db - lo.std_dev_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub id: String,
    pub position: Position3D,
    /// Constant receiver offset (antenna, battery placement, ...).
    #[serde(default)]
    pub bias_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Position3D,
    pub dwell_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ModelSpec {
    #[serde(rename = "L")]
    exponent: f64,
    #[serde(rename = "C")]
    intercept_db: f64,
}

mod model_spec {
    use super::ModelSpec;
    use crate::pathloss::PathLossModel;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &PathLossModel, s: S) -> Result<S::Ok, S::Error> {
        ModelSpec {
            exponent: m.exponent,
            intercept_db: m.intercept_db,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PathLossModel, D::Error> {
        let m = ModelSpec::deserialize(d)?;
        Ok(PathLossModel::new(m.exponent, m.intercept_db))
    }
}

fn default_format() -> MessageFormat {
    MessageFormat::M3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub uav_id: UavId,
    #[serde(default = "default_format")]
    pub message_format: MessageFormat,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(with = "model_spec")]
    pub truth_model: PathLossModel,
    #[serde(default)]
    pub schedule: BroadcastSchedule,
    pub noise: NoiseProfile,
    #[serde(default)]
    pub collector: FusionConfig,
    pub stations: Vec<StationSpec>,
    pub waypoints: Vec<Waypoint>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.stations.is_empty() {
            return Err(invalid("at least one station is required"));
        }
        if self.waypoints.is_empty() {
            return Err(invalid("at least one waypoint is required"));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(invalid(format!(
                "loss_probability {} must be in [0, 1)",
                self.loss_probability
            )));
        }
        if !self.truth_model.exponent.is_finite() || !self.truth_model.intercept_db.is_finite() {
            return Err(invalid("truth model must be finite"));
        }
        self.noise.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.stations {
            if !UavId::is_valid(&s.id) {
                return Err(invalid(format!(
                    "station id {:?} is not a valid token",
                    s.id
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(invalid(format!("duplicate station id {}", s.id)));
            }
            if !s.position.is_finite() || s.position.z < 0.0 {
                return Err(invalid(format!("station {} has an invalid position", s.id)));
            }
            if !s.bias_db.is_finite() {
                return Err(invalid(format!("station {} bias must be finite", s.id)));
            }
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.dwell_s > 0.0) || !w.dwell_s.is_finite() {
                return Err(invalid(format!("waypoint {i} dwell must be positive")));
            }
            if !w.position.is_finite() || w.position.z < 0.0 {
                return Err(invalid(format!("waypoint {i} has an invalid position")));
            }
            if self.stations.iter().any(|s| s.position == w.position) {
                return Err(invalid(format!("waypoint {i} coincides with a station")));
            }
        }
        Ok(())
    }

    /// Waypoints whose dwell is too short to fill one averaging window.
    pub fn unusable_waypoints(&self) -> Vec<usize> {
        let need = self.schedule.dwell_requirement_s();
        self.waypoints
            .iter()
            .enumerate()
            .filter(|(_, w)| w.dwell_s + 1e-9 < need)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn registry(&self) -> StationRegistry {
        StationRegistry::from_iter(self.stations.iter().map(|s| (s.id.clone(), s.position)))
    }

    fn slots_in(&self, dwell_s: f64) -> usize {
        (dwell_s / self.schedule.interval_s() + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedSample {
    pub sample: RssiSample,
    pub truth_distance_m: f64,
    pub waypoint_index: usize,
    /// Emission slot within the waypoint's dwell.
    pub slot_in_dwell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationStream {
    pub station_id: String,
    pub samples: Vec<EmittedSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    PerStation,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one emission, independent of every other emission.
pub fn emission_rng(seed: u64, station_id: &str, emission_index: u64) -> ChaCha8Rng {
    let mixed =
        splitmix64(splitmix64(seed ^ splitmix64(fnv1a(station_id.as_bytes()))) ^ emission_index);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn simulate_station(scenario: &Scenario, station: &StationSpec) -> StationStream {
    let interval = scenario.schedule.interval_s();
    let offset = scenario.noise.offset_db(scenario.message_format) + station.bias_db;
    let mut samples = Vec::new();
    let mut t0 = 0.0;
    let mut emission_index = 0u64;
    for (wi, wp) in scenario.waypoints.iter().enumerate() {
        let distance = station.position.distance_to(&wp.position);
        let sigma = sigma_at(&scenario.noise, distance);
        let expected = scenario
            .truth_model
            .predict_rssi(distance)
            .expect("validated: waypoints never coincide with stations");
        let noise = Normal::new(0.0, sigma).expect("validated: sigma finite and non-negative");
        for slot in 0..scenario.slots_in(wp.dwell_s) {
            let mut rng = emission_rng(scenario.seed, &station.id, emission_index);
            emission_index += 1;
            let lost = rng.random::<f64>() < scenario.loss_probability;
            if lost {
                continue;
            }
            let jitter = if sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            samples.push(EmittedSample {
                sample: RssiSample {
                    station_id: station.id.clone(),
                    uav_id: scenario.uav_id.to_string(),
                    rssi_db: expected + offset + jitter,
                    timestamp_s: t0 + slot as f64 * interval,
                },
                truth_distance_m: distance,
                waypoint_index: wi,
                slot_in_dwell: slot,
            });
        }
        t0 += wp.dwell_s;
    }
    StationStream {
        station_id: station.id.clone(),
        samples,
    }
}

pub fn simulate(scenario: &Scenario) -> Result<Vec<StationStream>, ScenarioError> {
    simulate_with(scenario, Parallelism::PerStation)
}

pub fn simulate_with(
    scenario: &Scenario,
    parallelism: Parallelism,
) -> Result<Vec<StationStream>, ScenarioError> {
    scenario.validate()?;
    let streams = match parallelism {
        Parallelism::Serial => scenario
            .stations
            .iter()
            .map(|s| simulate_station(scenario, s))
            .collect(),
        Parallelism::PerStation => thread::scope(|scope| {
            let handles: Vec<_> = scenario
                .stations
                .iter()
                .map(|s| scope.spawn(move || simulate_station(scenario, s)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("station worker panicked"))
                .collect()
        }),
    };
    Ok(streams)
}

/// Folds sample streams into one report per completed averaging window.
///
/// A window closes at the schedule time of its last slot; that time becomes
/// the report's `window_end_s` even when trailing samples were lost.
/// Reports come back in collector merge order: `window_end_s`, then station.
pub fn collect_reports(scenario: &Scenario, streams: &[StationStream]) -> Vec<StationReport> {
    let window = scenario.schedule.window_size();
    let interval = scenario.schedule.interval_s();
    let starts: Vec<f64> = scenario
        .waypoints
        .iter()
        .scan(0.0, |t, w| {
            let start = *t;
            *t += w.dwell_s;
            Some(start)
        })
        .collect();

    let mut reports = Vec::new();
    for stream in streams {
        let mut buckets: BTreeMap<(usize, usize), Vec<RssiSample>> = BTreeMap::new();
        for s in &stream.samples {
            let full_windows =
                scenario.slots_in(scenario.waypoints[s.waypoint_index].dwell_s) / window;
            let w = s.slot_in_dwell / window;
            if w < full_windows {
                buckets
                    .entry((s.waypoint_index, w))
                    .or_default()
                    .push(s.sample.clone());
            }
        }
        for ((wi, w), samples) in buckets {
            let mean = mean_rssi(&samples).expect("bucket is non-empty and single-source");
            let last_slot = (w + 1) * window - 1;
            reports.push(StationReport {
                station_id: stream.station_id.clone(),
                uav_id: scenario.uav_id.to_string(),
                window_end_s: starts[wi] + last_slot as f64 * interval,
                mean_rssi_db: mean.value_db,
                sample_count: mean.sample_count,
            });
        }
    }
    reports.sort_by(|a, b| {
        a.window_end_s
            .total_cmp(&b.window_end_s)
            .then_with(|| a.station_id.cmp(&b.station_id))
    });
    reports
}
