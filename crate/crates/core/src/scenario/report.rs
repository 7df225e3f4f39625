//! Run artifacts: the report document, per-frame track rows and the JSON
//! line logger.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::bus::to_canonical_string;
use crate::metrics::MetricsReport;
use crate::tracker::TrackRecord;

pub const LOG_ENV: &str = "FUSION_LOG_LEVEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    pub fn name(self) -> &'static str {
        match self {
            LogLevel::Error => "error",
            LogLevel::Warn => "warn",
            LogLevel::Info => "info",
            LogLevel::Debug => "debug",
        }
    }

    /// Level from `FUSION_LOG_LEVEL`, `info` when unset or unrecognized.
    pub fn from_env() -> Self {
        std::env::var(LOG_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(LogLevel::Info)
    }
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LogLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "error" => Ok(LogLevel::Error),
            "warn" => Ok(LogLevel::Warn),
            "info" => Ok(LogLevel::Info),
            "debug" => Ok(LogLevel::Debug),
            other => Err(format!("unknown log level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogLine {
    pub level: LogLevel,
    pub t: f64,
    pub module: String,
    pub msg: String,
}

/// Collects JSON log lines at or above a threshold.
#[derive(Debug, Clone)]
pub struct Logger {
    pub level: LogLevel,
    pub lines: Vec<String>,
}

impl Logger {
    pub fn new(level: LogLevel) -> Self {
        Self { level, lines: Vec::new() }
    }

    pub fn enabled(&self, level: LogLevel) -> bool {
        level <= self.level
    }

    pub fn log(&mut self, level: LogLevel, t: f64, module: &str, msg: impl Into<String>) {
        if !self.enabled(level) {
            return;
        }
        let line = LogLine {
            level,
            t,
            module: module.to_string(),
            msg: msg.into(),
        };
        self.lines.push(to_canonical_string(&line).expect("log line serializes"));
    }
}

/// One published bus frame, with its encoded bytes in hex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub t: f64,
    pub from: String,
    pub msg_type: String,
    pub topic: String,
    pub bytes: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSummary {
    pub published: u64,
    pub bytes: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Deliveries scheduled after the end of the run.
    pub undelivered: u64,
    pub by_type: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRow {
    pub t: f64,
    pub agent: String,
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub t: f64,
    pub gt: u64,
    pub confirmed: u64,
    pub matches: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ospa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    /// Effective configuration after defaults and overrides.
    pub scenario: Scenario,
    pub mode: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub samples: Vec<SampleRecord>,
    pub event_counts: BTreeMap<String, u64>,
    pub bus: BusSummary,
    pub bus_frames: Vec<BusRecord>,
    pub tracks: Vec<TrackRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        to_canonical_string(self).expect("report serializes")
    }

    pub fn tracks_jsonl(&self) -> String {
        let mut s = String::new();
        for row in &self.tracks {
            s.push_str(&to_canonical_string(row).expect("track row serializes"));
            s.push('\n');
        }
        s
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let f = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{x:.4}"));
        let m = &self.metrics;
        format!(
            "scenario={} mode={} seed={} frames={} precision={} recall={} mota={} motp={} idsw={} ade={} fde={} ospa={}",
            self.scenario.name,
            self.mode,
            self.seed,
            m.frames,
            f(m.precision),
            f(m.recall),
            f(m.mota),
            f(m.motp),
            m.id_switches,
            f(m.ade),
            f(m.fde),
            f(m.ospa_mean)
        )
    }
}
