//! Scenario documents, ground-truth motion and the discrete-event run loop.
//!
//! The JSON vocabulary is this crate's own; `version` must be 1 and unknown
//! keys are rejected everywhere.

pub mod engine;
pub mod replay;
pub mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Link, LinkParams, NetworkModel};
use crate::collab::CollabConfig;
use crate::geometry::{mount_from_optical, serde_arrays, vec3, CameraIntrinsics, Pose, Vec3};
use crate::metrics::MetricsConfig;
use crate::offload::{OffloadConfig, WorkerConfig};
use crate::sensing::{GroundTruthObject, Preset, SensorNoiseConfig};
use crate::tracker::TrackerConfig;

pub use engine::{run, run_scenario, RunOptions, RunOutput};
pub use replay::{parse_replay, FrameSource, ReplayInput, ReplayPlan, SensorData, SensorFrame, TruthSample, TruthTable};
pub use report::{BusRecord, LogLevel, RunReport, TrackRow};

pub const SCENARIO_VERSION: u32 = 1;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("validation failed: {invariant}: {detail}")]
    Validation { invariant: String, detail: String },
    #[error("time {t} outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
}

fn invalid(invariant: &str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        invariant: invariant.to_string(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cr,
    CrCovi,
    CrDist,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Cr, Mode::CrCovi, Mode::CrDist];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Cr => "cr",
            Mode::CrCovi => "cr-covi",
            Mode::CrDist => "cr-dist",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected cr, cr-covi or cr-dist)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    #[serde(with = "serde_arrays::vector")]
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Motion {
    Static {
        #[serde(with = "serde_arrays::vector")]
        position: Vec3,
    },
    ConstantVelocity {
        #[serde(with = "serde_arrays::vector")]
        p0: Vec3,
        #[serde(with = "serde_arrays::vector")]
        v: Vec3,
    },
    Waypoints {
        points: Vec<Waypoint>,
    },
}

impl Motion {
    fn segment(points: &[Waypoint], t: f64) -> usize {
        let last = points.len().saturating_sub(2);
        points[..=last].iter().rposition(|w| w.t <= t).unwrap_or(0)
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match self {
            Motion::Static { position } => *position,
            Motion::ConstantVelocity { p0, v } => p0 + v * t,
            Motion::Waypoints { points } => {
                if points.len() == 1 {
                    return points[0].position;
                }
                let i = Self::segment(points, t);
                let (a, b) = (&points[i], &points[i + 1]);
                let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                a.position + (b.position - a.position) * s
            }
        }
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        match self {
            Motion::Static { .. } => Vec3::zeros(),
            Motion::ConstantVelocity { v, .. } => *v,
            Motion::Waypoints { points } => {
                if points.len() == 1 {
                    return Vec3::zeros();
                }
                let i = Self::segment(points, t);
                let (a, b) = (&points[i], &points[i + 1]);
                (b.position - a.position) / (b.t - a.t)
            }
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Motion::Static { .. } => true,
            Motion::ConstantVelocity { v, .. } => *v == Vec3::zeros(),
            Motion::Waypoints { points } => points.windows(2).all(|w| w[0].position == w[1].position),
        }
    }

    fn validate(&self, duration: f64, owner: &str) -> Result<(), ScenarioError> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        match self {
            Motion::Static { position } if !finite(position) => Err(invalid("motion finite", owner)),
            Motion::ConstantVelocity { p0, v } if !(finite(p0) && finite(v)) => Err(invalid("motion finite", owner)),
            Motion::Waypoints { points } => {
                if points.len() < 2 || !points.iter().all(|w| finite(&w.position) && w.t.is_finite()) {
                    return Err(invalid("at least two finite waypoints", owner));
                }
                if !points.windows(2).all(|w| w[0].t < w[1].t) {
                    return Err(invalid("waypoint times strictly increasing", owner));
                }
                if points[0].t > 0.0 || points[points.len() - 1].t < duration {
                    return Err(invalid("waypoints span [0, duration]", owner));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Ego,
    Vehicle,
    Infrastructure,
    EdgeServer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Camera,
    Radar,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Camera => "camera",
            SensorKind::Radar => "radar",
        }
    }
}

/// Sensor placement on its agent: mount frame is x forward, y left, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mount {
    #[serde(with = "serde_arrays::vector")]
    pub position: Vec3,
    /// yaw, pitch, roll in degrees
    pub ypr_deg: [f64; 3],
}

impl Default for Mount {
    fn default() -> Self {
        Self {
            position: Vec3::zeros(),
            ypr_deg: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    #[serde(rename = "type")]
    pub kind: SensorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub noise: Option<SensorNoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default)]
    pub mount: Mount,
}

impl SensorSpec {
    pub fn rate(&self) -> f64 {
        self.rate.expect("normalized sensor has a rate")
    }

    pub fn noise(&self) -> SensorNoiseConfig {
        self.noise.expect("normalized sensor has noise")
    }

    pub fn agent_from_mount(&self) -> Pose {
        let [y, p, r] = self.mount.ypr_deg;
        Pose::from_ypr_deg(y, p, r, self.mount.position)
    }

    /// Agent-from-sensor: the optical frame for cameras, the mount frame for
    /// radars.
    pub fn agent_from_sensor(&self) -> Pose {
        let m = self.agent_from_mount();
        match self.kind {
            SensorKind::Camera => m.compose(&Pose {
                rotation: mount_from_optical(),
                translation: Vec3::zeros(),
            }),
            SensorKind::Radar => m,
        }
    }

    fn normalize(&mut self, owner: &str) -> Result<(), ScenarioError> {
        if let Some(name) = &self.preset {
            let preset = Preset::from_name(name).ok_or_else(|| invalid("known sensor preset", format!("{owner}: {name}")))?;
            let preset_kind = match preset.intrinsics() {
                Some(_) => SensorKind::Camera,
                None => SensorKind::Radar,
            };
            if preset_kind != self.kind {
                return Err(invalid("preset matches sensor type", format!("{owner}: {name}")));
            }
            self.rate.get_or_insert(preset.rate_hz());
            self.noise.get_or_insert(preset.noise());
            if let Some(k) = preset.intrinsics() {
                self.intrinsics.get_or_insert(k);
            }
        }
        if self.kind == SensorKind::Radar && self.intrinsics.is_some() {
            return Err(invalid("radar has no intrinsics", owner));
        }
        if self.rate.is_none() || self.noise.is_none() || (self.kind == SensorKind::Camera && self.intrinsics.is_none()) {
            return Err(invalid("sensor config complete (preset or explicit rate/noise/intrinsics)", owner));
        }
        let rate = self.rate();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("sensor rate > 0", owner));
        }
        self.noise().validate().map_err(|e| invalid(&e, owner))?;
        if let Some(k) = &self.intrinsics {
            k.validate().map_err(|e| invalid("camera intrinsics valid", format!("{owner}: {e}")))?;
        }
        if !(self.mount.position.iter().chain(&self.mount.ypr_deg).all(|x| x.is_finite())) {
            return Err(invalid("mount finite", owner));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    pub motion: Motion,
    /// Fixed heading of the agent body.
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<WorkerConfig>,
}

impl AgentSpec {
    pub fn world_from_agent(&self, t: f64) -> Pose {
        Pose::from_ypr_deg(self.yaw_deg, 0.0, 0.0, self.motion.position(t))
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.motion.velocity(t)
    }

    pub fn sensor_index(&self, kind: SensorKind) -> Option<usize> {
        self.sensors.iter().position(|s| s.kind == kind)
    }
}

fn default_extent() -> Vec3 {
    vec3(4.5, 1.8, 1.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u64,
    pub motion: Motion,
    #[serde(default = "default_extent", with = "serde_arrays::vector")]
    pub extent: Vec3,
}

impl ObjectSpec {
    pub fn at(&self, t: f64) -> GroundTruthObject {
        GroundTruthObject {
            id: self.id,
            position: self.motion.position(t),
            velocity: self.motion.velocity(t),
            extent: self.extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub base_latency: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub drop_prob: f64,
}

impl LinkSpec {
    pub fn params(&self) -> LinkParams {
        LinkParams {
            base_latency: self.base_latency,
            jitter: self.jitter,
            drop_prob: self.drop_prob,
        }
    }
}

fn default_link() -> Option<LinkParams> {
    Some(LinkParams::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Parameters for any agent pair without an explicit link; `null`
    /// disables implicit links.
    #[serde(default = "default_link")]
    pub default: Option<LinkParams>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            default: default_link(),
            links: Vec::new(),
        }
    }
}

impl NetworkSpec {
    pub fn model(&self) -> NetworkModel {
        NetworkModel {
            default: self.default,
            links: self.links.iter().map(|l| (Link::new(&l.from, &l.to), l.params())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub mode: Mode,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub collab: CollabConfig,
    #[serde(default)]
    pub offload: OffloadConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub duration: f64,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub network: NetworkSpec,
    pub pipeline: PipelineSpec,
}

/// Parses, fills defaults, resolves presets and validates.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    s.normalize()?;
    Ok(s)
}

impl Scenario {
    /// Resolves presets and validates every invariant. Idempotent.
    pub fn normalize(&mut self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid("version is 1", format!("got {}", self.version)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration > 0", format!("got {}", self.duration)));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if a.id.is_empty() || a.id.contains('/') || a.id.chars().any(char::is_whitespace) {
                return Err(invalid("agent id is non-empty without '/' or whitespace", format!("{:?}", a.id)));
            }
            if !ids.insert(a.id.clone()) {
                return Err(invalid("agent ids unique", a.id.clone()));
            }
        }
        let egos = self.agents.iter().filter(|a| a.kind == AgentKind::Ego).count();
        if egos != 1 {
            return Err(invalid("exactly one ego agent", format!("found {egos}")));
        }
        let mut obj_ids = BTreeSet::new();
        for o in &self.objects {
            if !obj_ids.insert(o.id) {
                return Err(invalid("object ids unique", o.id.to_string()));
            }
            if !o.extent.iter().all(|e| e.is_finite() && *e > 0.0) {
                return Err(invalid("extent components > 0", format!("object {}", o.id)));
            }
            o.motion.validate(self.duration, &format!("object {}", o.id))?;
        }
        let duration = self.duration;
        for a in &mut self.agents {
            a.motion.validate(duration, &format!("agent {}", a.id))?;
            if !a.yaw_deg.is_finite() {
                return Err(invalid("yaw finite", a.id.clone()));
            }
            match a.kind {
                AgentKind::EdgeServer => {
                    if !a.sensors.is_empty() {
                        return Err(invalid("edge-server has no sensors", a.id.clone()));
                    }
                    let w = a.worker.get_or_insert_with(WorkerConfig::default);
                    w.validate().map_err(|e| invalid("worker config valid", format!("{}: {e}", a.id)))?;
                }
                _ => {
                    if a.worker.is_some() {
                        return Err(invalid("only edge-servers have a worker config", a.id.clone()));
                    }
                }
            }
            if a.kind == AgentKind::Infrastructure && !a.motion.is_static() {
                return Err(invalid("infrastructure is static", a.id.clone()));
            }
            for kind in [SensorKind::Camera, SensorKind::Radar] {
                if a.sensors.iter().filter(|s| s.kind == kind).count() > 1 {
                    return Err(invalid("at most one camera and one radar per agent", a.id.clone()));
                }
            }
            for (i, s) in a.sensors.iter_mut().enumerate() {
                s.normalize(&format!("agent {} sensor {i}", a.id))?;
            }
        }
        if let Some(d) = &self.network.default {
            d.validate().map_err(|e| invalid(&e, "network default"))?;
        }
        for l in &self.network.links {
            l.params().validate().map_err(|e| invalid(&e, format!("link {}->{}", l.from, l.to)))?;
            if !ids.contains(&l.from) || !ids.contains(&l.to) || l.from == l.to {
                return Err(invalid("links join two distinct known agents", format!("{}->{}", l.from, l.to)));
            }
        }
        let p = &self.pipeline;
        p.tracker.validate().map_err(|e| invalid("tracker config valid", e.to_string()))?;
        if !(p.collab.staleness > 0.0 && p.collab.broadcast_rate > 0.0) {
            return Err(invalid("collab staleness and broadcast_rate > 0", ""));
        }
        p.offload.validate().map_err(|e| invalid("offload config valid", e.to_string()))?;
        p.metrics.validate().map_err(|e| invalid("metrics config valid", e.to_string()))?;
        self.check_mode()
    }

    fn check_mode(&self) -> Result<(), ScenarioError> {
        let net = self.network.model();
        let ego = self.ego();
        let link_ok = |from: &str, to: &str| net.params(&Link::new(from, to)).is_ok();
        match self.pipeline.mode {
            Mode::Cr => {}
            Mode::CrCovi => {
                let collaborators: Vec<&AgentSpec> = self
                    .agents
                    .iter()
                    .filter(|a| matches!(a.kind, AgentKind::Vehicle | AgentKind::Infrastructure) && !a.sensors.is_empty())
                    .collect();
                if collaborators.is_empty() {
                    return Err(invalid("cr-covi requires a collaborator with sensors", "no vehicle or infrastructure agent has sensors"));
                }
                for c in collaborators {
                    if !link_ok(&c.id, &ego.id) {
                        return Err(invalid("every collaborator has a link to the ego", c.id.clone()));
                    }
                }
            }
            Mode::CrDist => {
                let workers: Vec<&AgentSpec> = self.agents.iter().filter(|a| a.kind == AgentKind::EdgeServer).collect();
                if workers.is_empty() {
                    return Err(invalid("cr-dist requires an edge-server agent", "none declared"));
                }
                if ego.sensor_index(SensorKind::Camera).is_none() {
                    return Err(invalid("cr-dist requires an ego camera", ego.id.clone()));
                }
                for w in workers {
                    if !(link_ok(&ego.id, &w.id) && link_ok(&w.id, &ego.id)) {
                        return Err(invalid("ego and every edge-server are linked both ways", w.id.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies command-line overrides and re-validates.
    pub fn with_overrides(mut self, mode: Option<Mode>, seed: Option<u64>) -> Result<Self, ScenarioError> {
        if let Some(m) = mode {
            self.pipeline.mode = m;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        self.normalize()?;
        Ok(self)
    }

    pub fn ego_index(&self) -> usize {
        self.agents.iter().position(|a| a.kind == AgentKind::Ego).expect("validated scenario has an ego")
    }

    pub fn ego(&self) -> &AgentSpec {
        &self.agents[self.ego_index()]
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn truth_at(&self, t: f64) -> Result<Vec<GroundTruthObject>, ScenarioError> {
        world_at(&self.objects, t, self.duration)
    }
}

/// Ground truth of every object at `t`.
pub fn world_at(objects: &[ObjectSpec], t: f64, duration: f64) -> Result<Vec<GroundTruthObject>, ScenarioError> {
    if !(t >= 0.0 && t <= duration + TIME_EPS) {
        return Err(ScenarioError::OutOfRange { t, duration });
    }
    Ok(objects.iter().map(|o| o.at(t)).collect())
}

/// `k / rate` for every k with `k / rate <= duration`.
pub fn rate_grid(rate: f64, duration: f64) -> Vec<f64> {
    let n = (duration * rate + TIME_EPS).floor() as u64;
    (0..=n).map(|k| k as f64 / rate).collect()
}

/// `k * period` for every k with `k * period <= duration`.
pub fn period_grid(period: f64, duration: f64) -> Vec<f64> {
    let n = (duration / period + TIME_EPS).floor() as u64;
    (0..=n).map(|k| k as f64 * period).collect()
}

pub const BUNDLED: [(&str, &str); 3] = [
    ("urban", include_str!("../../scenarios/urban.json")),
    ("occlusion", include_str!("../../scenarios/occlusion.json")),
    ("edge", include_str!("../../scenarios/edge.json")),
];

/// Text of a scenario shipped with the crate.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "duration": 10,
        "seed": 7,
        "agents": [
            {"id": "ego", "kind": "ego", "motion": {"type": "static", "position": [0, 0, 0]},
             "sensors": [{"type": "camera", "preset": "blackfly-s"}]}
        ],
        "objects": [
            {"id": 1, "motion": {"type": "constant-velocity", "p0": [20, 0, 0], "v": [1, 0, 0]}}
        ],
        "pipeline": {"mode": "cr"}
    }"#;

    fn with(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let s = load_scenario(MINIMAL).unwrap();
        let cam = &s.agents[0].sensors[0];
        assert_eq!(cam.rate, Some(10.0));
        assert_eq!(cam.noise, Some(Preset::BlackflyS.noise()));
        assert_eq!(cam.intrinsics, Preset::BlackflyS.intrinsics());
        assert_eq!(s.objects[0].extent, default_extent());
        assert_eq!(s.network.default, Some(LinkParams::default()));
        assert_eq!(s.pipeline.tracker, TrackerConfig::default());
        assert_eq!(s.name, "scenario");
        // normalized output reloads to itself
        let again = load_scenario(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }

    fn invariant_of(text: &str) -> String {
        match load_scenario(text) {
            Err(ScenarioError::Validation { invariant, .. }) => invariant,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_agent_id() {
        let t = with(|v| {
            let a = v["agents"][0].clone();
            v["agents"].as_array_mut().unwrap().push(a);
        });
        assert_eq!(invariant_of(&t), "agent ids unique");
    }

    #[test]
    fn covi_without_collaborator() {
        let t = with(|v| v["pipeline"]["mode"] = "cr-covi".into());
        assert_eq!(invariant_of(&t), "cr-covi requires a collaborator with sensors");
    }

    #[test]
    fn dist_without_edge_server() {
        let t = with(|v| v["pipeline"]["mode"] = "cr-dist".into());
        assert_eq!(invariant_of(&t), "cr-dist requires an edge-server agent");
    }

    #[test]
    fn other_invariants() {
        assert_eq!(invariant_of(&with(|v| v["duration"] = 0.into())), "duration > 0");
        assert_eq!(invariant_of(&with(|v| v["version"] = 2.into())), "version is 1");
        assert_eq!(invariant_of(&with(|v| v["agents"][0]["kind"] = "vehicle".into())), "exactly one ego agent");
        let dup_obj = with(|v| {
            let o = v["objects"][0].clone();
            v["objects"].as_array_mut().unwrap().push(o);
        });
        assert_eq!(invariant_of(&dup_obj), "object ids unique");
        let rsu_moving = with(|v| {
            v["agents"].as_array_mut().unwrap().push(serde_json::json!({
                "id": "rsu", "kind": "infrastructure",
                "motion": {"type": "constant-velocity", "p0": [0, 0, 0], "v": [1, 0, 0]}
            }));
        });
        assert_eq!(invariant_of(&rsu_moving), "infrastructure is static");
        let edge_sensor = with(|v| {
            v["agents"].as_array_mut().unwrap().push(serde_json::json!({
                "id": "edge", "kind": "edge-server", "motion": {"type": "static", "position": [0, 0, 0]},
                "sensors": [{"type": "radar", "preset": "iwr1443"}]
            }));
        });
        assert_eq!(invariant_of(&edge_sensor), "edge-server has no sensors");
        let bad_wp = with(|v| {
            v["objects"][0]["motion"] = serde_json::json!({"type": "waypoints", "points": [
                {"t": 0, "position": [0, 0, 0]}, {"t": 0, "position": [1, 0, 0]}, {"t": 10, "position": [2, 0, 0]}
            ]});
        });
        assert_eq!(invariant_of(&bad_wp), "waypoint times strictly increasing");
        let short_wp = with(|v| {
            v["objects"][0]["motion"] = serde_json::json!({"type": "waypoints", "points": [
                {"t": 0, "position": [0, 0, 0]}, {"t": 5, "position": [1, 0, 0]}
            ]});
        });
        assert_eq!(invariant_of(&short_wp), "waypoints span [0, duration]");
        let wrong_preset = with(|v| v["agents"][0]["sensors"][0]["preset"] = "iwr1443".into());
        assert_eq!(invariant_of(&wrong_preset), "preset matches sensor type");
    }

    #[test]
    fn parse_error_has_line() {
        let text = "{\n  \"version\": 1,\n  \"duration\": ,\n}";
        match load_scenario(text) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let t = with(|v| v["agents"][0]["colour"] = "red".into());
        assert!(matches!(load_scenario(&t), Err(ScenarioError::Parse { .. })));
        let t = with(|v| v["objects"][0]["motion"]["speed"] = 3.into());
        assert!(matches!(load_scenario(&t), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn overrides_revalidate() {
        let s = load_scenario(MINIMAL).unwrap();
        let s2 = s.clone().with_overrides(None, Some(99)).unwrap();
        assert_eq!(s2.seed, 99);
        assert!(s.with_overrides(Some(Mode::CrDist), None).is_err());
    }

    #[test]
    fn world_at_motion() {
        let cv = ObjectSpec {
            id: 1,
            motion: Motion::ConstantVelocity {
                p0: Vec3::zeros(),
                v: vec3(1.0, 0.0, 0.0),
            },
            extent: default_extent(),
        };
        let wp = ObjectSpec {
            id: 2,
            motion: Motion::Waypoints {
                points: vec![
                    Waypoint { t: 0.0, position: Vec3::zeros() },
                    Waypoint { t: 10.0, position: vec3(10.0, 0.0, 0.0) },
                ],
            },
            extent: default_extent(),
        };
        let w = world_at(&[cv, wp], 5.0, 10.0).unwrap();
        assert_eq!(w[0].position, vec3(5.0, 0.0, 0.0));
        assert_eq!(w[1].position, vec3(5.0, 0.0, 0.0));
        assert_eq!(w[1].velocity, vec3(1.0, 0.0, 0.0));
        assert!(matches!(world_at(&[], -1.0, 10.0), Err(ScenarioError::OutOfRange { .. })));
        assert!(world_at(&[], 10.5, 10.0).is_err());
    }

    #[test]
    fn waypoint_segments() {
        let m = Motion::Waypoints {
            points: vec![
                Waypoint { t: 0.0, position: Vec3::zeros() },
                Waypoint { t: 2.0, position: vec3(2.0, 0.0, 0.0) },
                Waypoint { t: 4.0, position: vec3(2.0, 4.0, 0.0) },
            ],
        };
        assert_eq!(m.velocity(1.0), vec3(1.0, 0.0, 0.0));
        // at a knot the outgoing segment applies
        assert_eq!(m.velocity(2.0), vec3(0.0, 2.0, 0.0));
        assert_eq!(m.position(3.0), vec3(2.0, 2.0, 0.0));
        assert_eq!(m.velocity(4.0), vec3(0.0, 2.0, 0.0));
        assert_eq!(m.position(4.0), vec3(2.0, 4.0, 0.0));
    }

    #[test]
    fn tick_grid_counts() {
        let g = rate_grid(10.0, 10.0);
        assert_eq!(g.len(), 101);
        assert_eq!(g[100], 10.0);
        assert_eq!(rate_grid(20.0, 10.0).len(), 201);
        assert_eq!(period_grid(0.5, 10.0).len(), 21);
    }

    #[test]
    fn camera_pose_looks_forward() {
        let s = load_scenario(MINIMAL).unwrap();
        let cam = &s.agents[0].sensors[0];
        // optical z maps to agent x
        let z = cam.agent_from_sensor().transform_vector(&vec3(0.0, 0.0, 1.0));
        assert!((z - vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn bundled_scenarios_load() {
        for (name, text) in BUNDLED {
            let s = load_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("dist".parse::<Mode>().is_err());
    }
}
