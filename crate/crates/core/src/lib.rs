//! GPS-free UAV localization from LoRaWAN Remote-ID signal strength.
//!
//! Ground stations average the RSSI of a UAV's Remote-ID broadcasts, turn
//! the mean into a slant distance with a calibrated log-distance path-loss
//! model, and a collector trilaterates the UAV from four or more ranges.
//!
//! - [`pathloss`]: model, calibration fit, descriptive statistics
//! - [`geometry`]: slant distance from field measurements, Cartesian helpers
//! - [`trilateration`]: linearized sphere intersection, closed-form least squares
//! - [`remote_id`]: broadcast payload codec and schedule checks
//! - [`simulator`]: deterministic RSSI streams from a declarative scenario
//! - [`station_net`]: report lines, station registry, windowed fusion

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

pub mod geometry;
pub mod pathloss;
pub mod remote_id;
pub mod simulator;
pub mod station_net;
pub mod trilateration;

pub use geometry::{distance_error_pct, euclidean_distance, slant_distance, Position3D};
pub use pathloss::{
    describe_samples, fit_model, mean_rssi, CalibrationPoint, DistanceEstimate, MeanRssi,
    PathLossModel, RegressionReport, RssiSample, SampleStats,
};
pub use remote_id::{BroadcastSchedule, MessageFormat, RemoteIdMessage, UavId};
pub use simulator::{simulate, NoiseProfile, Scenario};
pub use station_net::{Collector, FixRecord, FusionConfig, StationRegistry, StationReport};
pub use trilateration::{locate, LocateOutcome, SolvePath, SphereConstraint};
