//! Recorded sensor frames and ground truth (JSONL), and the truth table used
//! for scoring.
//!
//! Line kinds:
//! - `{"scenario": {...}}` optional header, first line only
//! - `{"t", "agent", "sensor", "type": "camera"|"radar", "detections": [...]}`
//! - `{"t", "truth": [...]}`

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{load_scenario, AgentKind, AgentSpec, Mode, Motion, Mount, PipelineSpec, Scenario, SensorKind, SensorSpec};
use crate::geometry::{vec3, Vec3};
use crate::sensing::{Detection2D, GroundTruthObject, Preset, RadarPoint};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", line_prefix(*.line))]
pub struct ReplayError {
    pub line: usize,
    pub message: String,
}

fn line_prefix(line: usize) -> String {
    match line {
        0 => String::new(),
        n => format!("line {n}: "),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorData {
    Camera(Vec<Detection2D>),
    Radar(Vec<RadarPoint>),
}

impl SensorData {
    pub fn kind(&self) -> SensorKind {
        match self {
            SensorData::Camera(_) => SensorKind::Camera,
            SensorData::Radar(_) => SensorKind::Radar,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SensorData::Camera(d) => d.len(),
            SensorData::Radar(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One sensor's output at one tick. Also the DETECTIONS bus payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct SensorFrame {
    pub t: f64,
    pub agent: String,
    pub sensor: usize,
    pub data: SensorData,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    t: f64,
    agent: String,
    sensor: usize,
    #[serde(rename = "type")]
    kind: SensorKind,
    detections: serde_json::Value,
}

impl TryFrom<RawFrame> for SensorFrame {
    type Error = String;

    fn try_from(r: RawFrame) -> Result<Self, Self::Error> {
        if !(r.t.is_finite() && r.t >= 0.0) {
            return Err(format!("frame time {} must be finite and >= 0", r.t));
        }
        let data = match r.kind {
            SensorKind::Camera => SensorData::Camera(serde_json::from_value(r.detections).map_err(|e| e.to_string())?),
            SensorKind::Radar => SensorData::Radar(serde_json::from_value(r.detections).map_err(|e| e.to_string())?),
        };
        Ok(SensorFrame {
            t: r.t,
            agent: r.agent,
            sensor: r.sensor,
            data,
        })
    }
}

impl From<SensorFrame> for RawFrame {
    fn from(f: SensorFrame) -> Self {
        let kind = f.data.kind();
        let detections = match f.data {
            SensorData::Camera(d) => serde_json::to_value(d),
            SensorData::Radar(d) => serde_json::to_value(d),
        }
        .expect("detections serialize");
        RawFrame {
            t: f.t,
            agent: f.agent,
            sensor: f.sensor,
            kind,
            detections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSample {
    pub t: f64,
    pub truth: Vec<GroundTruthObject>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    scenario: serde_json::Value,
}

/// Where sensor frames come from: the sensor models or a recording.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    Live,
    Recorded(Vec<SensorFrame>),
}

/// Parsed replay file. Frame line numbers are kept for diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayInput {
    pub scenario: Option<Scenario>,
    pub frames: Vec<(usize, SensorFrame)>,
    pub truth: Vec<TruthSample>,
}

pub fn parse_replay(text: &str) -> Result<ReplayInput, ReplayError> {
    let mut out = ReplayInput::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ReplayError { line, message };
        if raw.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| err("expected a JSON object".into()))?;
        if obj.contains_key("scenario") {
            if out.scenario.is_some() || !out.frames.is_empty() || !out.truth.is_empty() {
                return Err(err("scenario header must be the first line".into()));
            }
            let h: Header = serde_json::from_value(v).map_err(|e| err(e.to_string()))?;
            let s = load_scenario(&h.scenario.to_string()).map_err(|e| err(e.to_string()))?;
            out.scenario = Some(s);
        } else if obj.contains_key("truth") {
            let s: TruthSample = serde_json::from_value(v).map_err(|e| err(e.to_string()))?;
            if !(s.t.is_finite() && s.t >= 0.0) {
                return Err(err(format!("truth time {} must be finite and >= 0", s.t)));
            }
            out.truth.push(s);
        } else {
            let f: SensorFrame = serde_json::from_value(v).map_err(|e| err(e.to_string()))?;
            out.frames.push((line, f));
        }
    }
    Ok(out)
}

/// Everything `engine::run` needs to drive a replay.
#[derive(Debug, Clone)]
pub struct ReplayPlan {
    pub scenario: Scenario,
    pub source: FrameSource,
    /// `None` when the header scenario's own object motion is the truth.
    pub truth: Option<TruthTable>,
}

impl ReplayInput {
    /// Resolves the rig (header scenario, else the default rig spanning the
    /// recording), applies a mode override and checks every frame.
    /// Errors on the whole file carry line 0.
    pub fn into_plan(self, mode: Option<Mode>) -> Result<ReplayPlan, ReplayError> {
        let whole = |message: String| ReplayError { line: 0, message };
        let scenario = match &self.scenario {
            Some(s) => s.clone().with_overrides(mode, None).map_err(|e| whole(e.to_string()))?,
            None => {
                let duration = self.last_time().filter(|t| *t > 0.0).unwrap_or(1.0);
                let mut s = default_rig(duration, mode.unwrap_or(Mode::Cr));
                s.normalize().map_err(|e| whole(e.to_string()))?;
                s
            }
        };
        self.check_against(&scenario)?;
        let truth = match (&self.scenario, self.truth.is_empty()) {
            (Some(_), true) => None,
            _ => Some(TruthTable::new(self.truth)),
        };
        Ok(ReplayPlan {
            scenario,
            source: FrameSource::Recorded(self.frames.into_iter().map(|(_, f)| f).collect()),
            truth,
        })
    }

    pub fn last_time(&self) -> Option<f64> {
        self.frames
            .iter()
            .map(|(_, f)| f.t)
            .chain(self.truth.iter().map(|s| s.t))
            .max_by(f64::total_cmp)
    }

    /// Checks every frame against the rig it will drive.
    pub fn check_against(&self, s: &Scenario) -> Result<(), ReplayError> {
        for (line, f) in &self.frames {
            let err = |message: String| ReplayError { line: *line, message };
            let agent = s
                .agents
                .iter()
                .find(|a| a.id == f.agent)
                .ok_or_else(|| err(format!("unknown agent {:?}", f.agent)))?;
            let sensor = agent
                .sensors
                .get(f.sensor)
                .ok_or_else(|| err(format!("agent {} has no sensor {}", f.agent, f.sensor)))?;
            if sensor.kind != f.data.kind() {
                return Err(err(format!(
                    "agent {} sensor {} is a {}, frame is {}",
                    f.agent,
                    f.sensor,
                    sensor.kind.name(),
                    f.data.kind().name()
                )));
            }
            if f.t > s.duration + 1e-9 {
                return Err(err(format!("frame time {} exceeds duration {}", f.t, s.duration)));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_RIG_HEIGHT: f64 = 1.5;

/// Rig assumed for recordings without a header: a static ego `"ego"` at the
/// origin facing +x with a blackfly-s camera (sensor 0) and an iwr1443
/// radar (sensor 1), both mounted at the same point.
pub fn default_rig(duration: f64, mode: Mode) -> Scenario {
    let mount = Mount {
        position: vec3(0.0, 0.0, DEFAULT_RIG_HEIGHT),
        ypr_deg: [0.0; 3],
    };
    let sensor = |kind, preset: Preset| SensorSpec {
        kind,
        preset: Some(preset.name().into()),
        rate: None,
        noise: None,
        intrinsics: None,
        mount,
    };
    let mut s = Scenario {
        version: super::SCENARIO_VERSION,
        name: "replay".into(),
        duration,
        seed: 0,
        agents: vec![AgentSpec {
            id: "ego".into(),
            kind: AgentKind::Ego,
            motion: Motion::Static { position: Vec3::zeros() },
            yaw_deg: 0.0,
            sensors: vec![sensor(SensorKind::Camera, Preset::BlackflyS), sensor(SensorKind::Radar, Preset::Iwr1443)],
            worker: None,
        }],
        objects: Vec::new(),
        network: Default::default(),
        pipeline: PipelineSpec {
            mode,
            tracker: Default::default(),
            collab: Default::default(),
            offload: Default::default(),
            metrics: Default::default(),
        },
    };
    // default rig is valid for mode cr; callers re-check other modes
    let _ = s.normalize();
    s
}

/// Ground truth sampled at discrete times; linear in between.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthTable {
    samples: Vec<TruthSample>,
}

impl TruthTable {
    pub fn new(mut samples: Vec<TruthSample>) -> Self {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        samples.dedup_by(|b, a| a.t == b.t);
        Self { samples }
    }

    pub fn push(&mut self, sample: TruthSample) {
        match self.samples.last() {
            Some(last) if last.t >= sample.t => {
                let mut all = std::mem::take(&mut self.samples);
                all.push(sample);
                *self = Self::new(all);
            }
            _ => self.samples.push(sample),
        }
    }

    pub fn samples(&self) -> &[TruthSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Exact sample when `t` was recorded; otherwise interpolated between the
    /// bracketing samples for objects present in both. Empty outside the
    /// recorded span.
    pub fn at(&self, t: f64) -> Vec<GroundTruthObject> {
        let i = self.samples.partition_point(|s| s.t < t);
        if let Some(s) = self.samples.get(i) {
            if s.t == t {
                return s.truth.clone();
            }
        }
        if i == 0 || i >= self.samples.len() {
            return Vec::new();
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let w = (t - a.t) / (b.t - a.t);
        a.truth
            .iter()
            .filter_map(|oa| {
                let ob = b.truth.iter().find(|o| o.id == oa.id)?;
                Some(GroundTruthObject {
                    id: oa.id,
                    position: oa.position + (ob.position - oa.position) * w,
                    velocity: oa.velocity + (ob.velocity - oa.velocity) * w,
                    extent: oa.extent,
                })
            })
            .collect()
    }

    pub fn position_of(&self, id: u64, t: f64) -> Option<Vec3> {
        self.at(t).into_iter().find(|o| o.id == id).map(|o| o.position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::BBox;

    fn gt(id: u64, x: f64) -> GroundTruthObject {
        GroundTruthObject {
            id,
            position: vec3(x, 0.0, 0.0),
            velocity: vec3(1.0, 0.0, 0.0),
            extent: vec3(1.0, 1.0, 1.0),
        }
    }

    #[test]
    fn frame_json_round_trip() {
        let f = SensorFrame {
            t: 0.1,
            agent: "ego".into(),
            sensor: 0,
            data: SensorData::Camera(vec![Detection2D {
                bbox: BBox::from([1.0, 2.0, 3.0, 4.0]),
                score: 0.9,
                sensor_id: "cam".into(),
                timestamp: 0.1,
            }]),
        };
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"type\":\"camera\""));
        assert_eq!(serde_json::from_str::<SensorFrame>(&s).unwrap(), f);
    }

    #[test]
    fn parse_lines_and_errors() {
        let text = [
            r#"{"t":0,"agent":"ego","sensor":1,"type":"radar","detections":[]}"#,
            "",
            r#"{"t":0,"truth":[]}"#,
        ]
        .join("\n");
        let r = parse_replay(&text).unwrap();
        assert_eq!(r.frames.len(), 1);
        assert_eq!(r.frames[0].0, 1);
        assert_eq!(r.truth.len(), 1);
        let bad = format!("{text}\n{{\"t\":1,\"agent\":\"ego\",\"sensor\":0,\"type\":\"lidar\",\"detections\":[]}}");
        assert_eq!(parse_replay(&bad).unwrap_err().line, 4);
        assert_eq!(parse_replay("[1,2]").unwrap_err().line, 1);
        assert!(parse_replay("").unwrap().frames.is_empty());
    }

    #[test]
    fn rig_check() {
        let rig = default_rig(10.0, Mode::Cr);
        let ok = parse_replay(r#"{"t":0,"agent":"ego","sensor":1,"type":"radar","detections":[]}"#).unwrap();
        ok.check_against(&rig).unwrap();
        let wrong = parse_replay(r#"{"t":0,"agent":"ego","sensor":0,"type":"radar","detections":[]}"#).unwrap();
        assert_eq!(wrong.check_against(&rig).unwrap_err().line, 1);
        let stranger = parse_replay(r#"{"t":0,"agent":"rsu","sensor":0,"type":"radar","detections":[]}"#).unwrap();
        assert!(stranger.check_against(&rig).is_err());
    }

    #[test]
    fn truth_table_lookup() {
        let table = TruthTable::new(vec![
            TruthSample { t: 1.0, truth: vec![gt(1, 1.0), gt(2, 5.0)] },
            TruthSample { t: 0.0, truth: vec![gt(1, 0.0)] },
        ]);
        assert_eq!(table.at(1.0).len(), 2);
        let mid = table.at(0.5);
        assert_eq!(mid.len(), 1);
        assert_eq!(mid[0].position, vec3(0.5, 0.0, 0.0));
        assert!(table.at(2.0).is_empty());
        assert_eq!(table.position_of(2, 1.0), Some(vec3(5.0, 0.0, 0.0)));
        assert_eq!(table.position_of(2, 0.5), None);
    }
}
