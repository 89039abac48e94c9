//! Remote-ID broadcast payloads and the broadcast schedule.
//!
//! Three payload formats are supported:
//!
//! | format | payload for id `FF1`                          | bytes |
//! |--------|-----------------------------------------------|-------|
//! | M1     | `FF 31` (hex byte, then the trailing ASCII)   | 2     |
//! | M2     | `FF1`                                         | 3     |
//! | M3     | `FF1 is the UAV ID number that is being ...`  | 64    |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ID_LEN: usize = 16;

/// Minimum spacing between broadcasts the radios tolerate without loss.
pub const MIN_INTERVAL_S: f64 = 2.0;

/// Framing bytes counted for airtime but never written into payloads.
pub const DEFAULT_FRAME_OVERHEAD_BYTES: usize = 2;

const M3_SUFFIX: &str = " is the UAV ID number that is being used to identify this UAV";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteIdError {
    #[error("invalid UAV id {0:?}")]
    InvalidId(String),
    #[error("id {id:?} cannot be encoded as {format}")]
    IdNotEncodable { id: String, format: MessageFormat },
    #[error("malformed {format} payload: {reason}")]
    MalformedPayload {
        format: MessageFormat,
        reason: String,
    },
    #[error("broadcast interval {0} s is below the {MIN_INTERVAL_S} s minimum")]
    IntervalTooShort(f64),
    #[error("window size must be at least 1")]
    EmptyWindow,
    #[error("unknown message format {0:?}")]
    UnknownFormat(String),
}

/// Short printable-ASCII UAV identifier. Spaces and commas are excluded so
/// the id survives both the M3 sentence and CSV report lines.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UavId(String);

impl UavId {
    pub fn new(id: impl Into<String>) -> Result<Self, RemoteIdError> {
        let id = id.into();
        if Self::is_valid(&id) {
            Ok(Self(id))
        } else {
            Err(RemoteIdError::InvalidId(id))
        }
    }

    pub fn is_valid(id: &str) -> bool {
        !id.is_empty()
            && id.len() <= MAX_ID_LEN
            && id.bytes().all(|b| b.is_ascii_graphic() && b != b',')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UavId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for UavId {
    type Error = RemoteIdError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<UavId> for String {
    fn from(id: UavId) -> Self {
        id.0
    }
}

impl FromStr for UavId {
    type Err = RemoteIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageFormat {
    /// Two raw bytes, shown in hexadecimal.
    M1,
    /// Three-character string.
    M2,
    /// Full identifying sentence.
    M3,
}

impl MessageFormat {
    pub const ALL: [MessageFormat; 3] = [Self::M1, Self::M2, Self::M3];
}

impl fmt::Display for MessageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
        })
    }
}

impl FromStr for MessageFormat {
    type Err = RemoteIdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M1" | "m1" => Ok(Self::M1),
            "M2" | "m2" => Ok(Self::M2),
            "M3" | "m3" => Ok(Self::M3),
            other => Err(RemoteIdError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteIdMessage {
    pub format: MessageFormat,
    pub payload: Vec<u8>,
    pub uav_id: UavId,
}

impl RemoteIdMessage {
    /// Payload bytes plus framing, for airtime accounting.
    pub fn on_air_len(&self, frame_overhead_bytes: usize) -> usize {
        self.payload.len() + frame_overhead_bytes
    }

    /// Space-separated uppercase hex, e.g. `FF 31`.
    pub fn hex(&self) -> String {
        self.payload
            .iter()
            .map(|b| format!("{b:02X}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn is_upper_hex(b: u8) -> bool {
    b.is_ascii_digit() || (b'A'..=b'F').contains(&b)
}

pub fn encode(uav_id: &UavId, format: MessageFormat) -> Result<RemoteIdMessage, RemoteIdError> {
    let id = uav_id.as_str();
    let not_encodable = || RemoteIdError::IdNotEncodable {
        id: id.to_string(),
        format,
    };
    let payload = match format {
        MessageFormat::M1 => {
            // "<HH><c>": one hex-written byte followed by one literal character.
            let bytes = id.as_bytes();
            if bytes.len() != 3 || !is_upper_hex(bytes[0]) || !is_upper_hex(bytes[1]) {
                return Err(not_encodable());
            }
            let high = u8::from_str_radix(&id[..2], 16).map_err(|_| not_encodable())?;
            vec![high, bytes[2]]
        }
        MessageFormat::M2 => {
            if id.len() != 3 {
                return Err(not_encodable());
            }
            id.as_bytes().to_vec()
        }
        MessageFormat::M3 => format!("{id}{M3_SUFFIX}").into_bytes(),
    };
    Ok(RemoteIdMessage {
        format,
        payload,
        uav_id: uav_id.clone(),
    })
}

pub fn decode(payload: &[u8], format: MessageFormat) -> Result<UavId, RemoteIdError> {
    let malformed = |reason: &str| RemoteIdError::MalformedPayload {
        format,
        reason: reason.to_string(),
    };
    let id = match format {
        MessageFormat::M1 => {
            let [high, tail] = payload else {
                return Err(malformed("expected exactly 2 bytes"));
            };
            format!("{high:02X}{}", *tail as char)
        }
        MessageFormat::M2 => {
            if payload.len() != 3 {
                return Err(malformed("expected exactly 3 bytes"));
            }
            String::from_utf8(payload.to_vec()).map_err(|_| malformed("not ASCII"))?
        }
        MessageFormat::M3 => {
            let text = std::str::from_utf8(payload).map_err(|_| malformed("not ASCII"))?;
            let (id, _) = text
                .split_once(' ')
                .ok_or_else(|| malformed("missing sentence body"))?;
            if &text[id.len()..] != M3_SUFFIX {
                return Err(malformed("sentence does not match the template"));
            }
            id.to_string()
        }
    };
    UavId::new(id).map_err(|e| match e {
        RemoteIdError::InvalidId(id) => malformed(&format!("decoded id {id:?} is not valid")),
        other => other,
    })
}

/// Broadcast cadence and averaging window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec")]
pub struct BroadcastSchedule {
    interval_s: f64,
    window_size: usize,
}

#[derive(Deserialize)]
struct ScheduleSpec {
    interval_s: f64,
    window_size: usize,
}

impl TryFrom<ScheduleSpec> for BroadcastSchedule {
    type Error = RemoteIdError;
    fn try_from(s: ScheduleSpec) -> Result<Self, Self::Error> {
        Self::new(s.interval_s, s.window_size)
    }
}

impl Default for BroadcastSchedule {
    fn default() -> Self {
        Self {
            interval_s: MIN_INTERVAL_S,
            window_size: crate::pathloss::DEFAULT_WINDOW_SIZE,
        }
    }
}

/// Adjacent broadcasts closer than the schedule interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleViolation {
    /// Index (in sorted order) of the later timestamp of the pair.
    pub index: usize,
    pub gap_s: f64,
}

impl BroadcastSchedule {
    pub fn new(interval_s: f64, window_size: usize) -> Result<Self, RemoteIdError> {
        if !(interval_s >= MIN_INTERVAL_S) || !interval_s.is_finite() {
            return Err(RemoteIdError::IntervalTooShort(interval_s));
        }
        if window_size == 0 {
            return Err(RemoteIdError::EmptyWindow);
        }
        Ok(Self {
            interval_s,
            window_size,
        })
    }

    pub fn interval_s(&self) -> f64 {
        self.interval_s
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    /// How long the UAV must hover to fill one averaging window.
    pub fn dwell_requirement_s(&self) -> f64 {
        self.interval_s * self.window_size as f64
    }

    pub fn validate(&self, timestamps_s: &[f64]) -> Vec<ScheduleViolation> {
        validate_schedule(timestamps_s, self.interval_s)
    }
}

/// Flags every adjacent gap shorter than `interval_s`. Input is sorted first.
pub fn validate_schedule(timestamps_s: &[f64], interval_s: f64) -> Vec<ScheduleViolation> {
    let mut sorted = timestamps_s.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let gap_s = w[1] - w[0];
            (gap_s < interval_s).then_some(ScheduleViolation {
                index: i + 1,
                gap_s,
            })
        })
        .collect()
}
