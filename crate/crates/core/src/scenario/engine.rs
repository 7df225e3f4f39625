//! Single-threaded discrete-event loop.
//!
//! Events are ordered by `(time, seq)`. Sensor ticks and periodic timers are
//! pre-scheduled at start, sorted by time, kind, agent id and sensor; bus
//! deliveries and task completions are scheduled as they arise. Each agent
//! with sensors fuses at the tick times of its camera (its radar if it has no
//! camera), using the most recent radar frame.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use thiserror::Error;

use super::replay::{FrameSource, SensorData, SensorFrame, TruthSample, TruthTable};
use super::report::{BusRecord, BusSummary, LogLevel, Logger, RunReport, SampleRecord, TrackRow};
use super::{period_grid, rate_grid, AgentKind, Mode, Scenario, SensorKind};
use crate::bus::{decode, encode, seconds_to_ns, to_canonical_bytes, BusFrame, Delivery, Link, MsgType, NetworkModel, Router, Subscription};
use crate::collab::{CollabState, RemoteTrack, RemoteTrackMsg};
use crate::fusion::{frustum_associate, synthesize, Detection3D};
use crate::geometry::{transform_gaussian, Pose, Vec3};
use crate::metrics::{prediction_error, MetricsAccumulator};
use crate::offload::{
    emulate_worker, Batch, Broker, Dispatch, IntegrateOutcome, ReplayTracker, StereoPayload, TaskRequest, TaskResult,
    TaskStatus, WorkerConfig, STEREO_TASK,
};
use crate::rng::{link_key, sensor_key, stream, worker_key, StreamRng};
use crate::sensing::{camera_observe, radar_observe, visible_boxes, Detection2D, GroundTruthObject, RadarPoint};
use crate::tracker::{predict_trajectory, TrackerState};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("t={t}: {message}")]
pub struct RunError {
    pub t: f64,
    pub message: String,
}

fn fail(t: f64, e: impl std::fmt::Display) -> RunError {
    RunError { t, message: e.to_string() }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub log_level: LogLevel,
    /// Produce replay JSONL lines.
    pub record: bool,
    /// Keep the ego tracker state after every ego frame.
    pub keep_states: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            log_level: LogLevel::Info,
            record: true,
            keep_states: false,
        }
    }
}

/// Internal traces for tests and oracles; not serialized.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub ego_states: Vec<(f64, TrackerState)>,
    pub ego_final: Option<TrackerState>,
    /// cr-dist: every accepted batch with its ordering key.
    pub batches: Vec<Batch>,
    pub outcomes: Vec<IntegrateOutcome>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub recording: Vec<String>,
    pub log: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl RunOutput {
    pub fn recording_jsonl(&self) -> String {
        let mut s = self.recording.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum TimerKind {
    Heartbeat,
    Broadcast,
    TaskSubmit,
    Reap,
}

impl TimerKind {
    fn name(self) -> &'static str {
        match self {
            TimerKind::Heartbeat => "timer.heartbeat",
            TimerKind::Broadcast => "timer.broadcast",
            TimerKind::TaskSubmit => "timer.task_submit",
            TimerKind::Reap => "timer.reap",
        }
    }
}

#[derive(Debug)]
enum EventKind {
    SensorTick { agent: usize, sensor: usize },
    BusDeliver { to: usize, bytes: Vec<u8> },
    TaskComplete { worker: usize, result: TaskResult },
    MetricSample,
    Timer { kind: TimerKind, agent: usize },
}

#[derive(Debug)]
struct Event {
    t: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.seq.cmp(&other.seq))
    }
}

enum AgentTracker {
    Plain(TrackerState),
    Replay(ReplayTracker),
}

impl AgentTracker {
    fn state(&self) -> &TrackerState {
        match self {
            AgentTracker::Plain(s) => s,
            AgentTracker::Replay(r) => r.state(),
        }
    }
}

struct WorkerRt {
    cfg: WorkerConfig,
    rng: StreamRng,
    busy: bool,
    queue: VecDeque<TaskRequest>,
}

struct AgentRt {
    sensor_rngs: Vec<StreamRng>,
    /// Remaining sensor ticks before the frame at each fusion time fires.
    expected: BTreeMap<u64, usize>,
    camera: Option<(f64, Vec<Detection2D>)>,
    radar: Option<(f64, Vec<RadarPoint>)>,
    tracker: Option<AgentTracker>,
    inbox: Vec<RemoteTrackMsg>,
    worker: Option<WorkerRt>,
}

enum Truth<'a> {
    Analytic(&'a Scenario),
    Table(TruthTable),
}

impl Truth<'_> {
    fn at(&self, t: f64) -> Result<Vec<GroundTruthObject>, RunError> {
        match self {
            Truth::Analytic(s) => s.truth_at(t).map_err(|e| fail(t, e)),
            Truth::Table(tab) => Ok(tab.at(t)),
        }
    }
}

struct Engine<'a> {
    s: &'a Scenario,
    mode: Mode,
    ego: usize,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    last_popped: Option<(f64, u64)>,
    agents: Vec<AgentRt>,
    recorded: BTreeMap<(usize, usize, u64), SensorData>,
    truth: Truth<'a>,
    net: NetworkModel,
    link_rngs: BTreeMap<(usize, usize), StreamRng>,
    router: Router,
    collab: CollabState,
    broker: Option<Broker>,
    last_ego_frame: Option<f64>,
    last_task_frame: Option<f64>,
    last_ego_dets: Vec<Vec3>,
    metrics: MetricsAccumulator,
    samples: Vec<SampleRecord>,
    truth_seen: TruthTable,
    predictions: Vec<(u64, Vec<(f64, Vec3)>)>,
    event_counts: BTreeMap<String, u64>,
    bus: BusSummary,
    bus_frames: Vec<BusRecord>,
    tracks: Vec<TrackRow>,
    recording: Vec<String>,
    log: Logger,
    opts: RunOptions,
    diag: Diagnostics,
}

fn bits(t: f64) -> u64 {
    t.to_bits()
}

fn canonical<T: serde::Serialize>(v: &T) -> Vec<u8> {
    to_canonical_bytes(v).expect("payload serializes")
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario, source: FrameSource, truth: Truth<'a>, opts: RunOptions) -> Result<Self, RunError> {
        let mode = s.pipeline.mode;
        let ego = s.ego_index();
        let mut agents = Vec::new();
        for (ai, a) in s.agents.iter().enumerate() {
            let tracker = if a.sensors.is_empty() {
                None
            } else {
                let st = TrackerState::new(s.pipeline.tracker).map_err(|e| fail(0.0, e))?;
                Some(if ai == ego && mode == Mode::CrDist {
                    AgentTracker::Replay(ReplayTracker::new(st, s.pipeline.offload.snapshot_horizon))
                } else {
                    AgentTracker::Plain(st)
                })
            };
            let worker = match (a.kind, mode) {
                (AgentKind::EdgeServer, Mode::CrDist) => Some(WorkerRt {
                    cfg: a.worker.unwrap_or_default(),
                    rng: stream(s.seed, &worker_key(&a.id)),
                    busy: false,
                    queue: VecDeque::new(),
                }),
                _ => None,
            };
            agents.push(AgentRt {
                sensor_rngs: (0..a.sensors.len()).map(|i| stream(s.seed, &sensor_key(&a.id, i))).collect(),
                expected: BTreeMap::new(),
                camera: None,
                radar: None,
                tracker,
                inbox: Vec::new(),
                worker,
            });
        }
        let mut router = Router::default();
        let ego_id = &s.agents[ego].id;
        match mode {
            Mode::Cr => {}
            Mode::CrCovi => router.subscribe(ego, Subscription::Prefix("tracks/".into())),
            Mode::CrDist => {
                router.subscribe(ego, Subscription::Exact(format!("results/{ego_id}")));
                router.subscribe(ego, Subscription::Prefix("heartbeat/".into()));
                for (i, a) in s.agents.iter().enumerate() {
                    if a.kind == AgentKind::EdgeServer {
                        router.subscribe(i, Subscription::Exact(format!("tasks/{}", a.id)));
                    }
                }
            }
        }
        let broker = match mode {
            Mode::CrDist => Some(Broker::new(s.pipeline.offload).map_err(|e| fail(0.0, e))?),
            _ => None,
        };
        let mut eng = Self {
            s,
            mode,
            ego,
            queue: BinaryHeap::new(),
            seq: 0,
            last_popped: None,
            agents,
            recorded: BTreeMap::new(),
            truth,
            net: s.network.model(),
            link_rngs: BTreeMap::new(),
            router,
            collab: CollabState::new(s.pipeline.collab),
            broker,
            last_ego_frame: None,
            last_task_frame: None,
            last_ego_dets: Vec::new(),
            metrics: MetricsAccumulator::new(s.pipeline.metrics),
            samples: Vec::new(),
            truth_seen: TruthTable::default(),
            predictions: Vec::new(),
            event_counts: BTreeMap::new(),
            bus: BusSummary::default(),
            bus_frames: Vec::new(),
            tracks: Vec::new(),
            recording: Vec::new(),
            log: Logger::new(opts.log_level),
            opts,
            diag: Diagnostics::default(),
        };
        eng.preschedule(source)?;
        Ok(eng)
    }

    fn push(&mut self, t: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Event { t, seq, kind }));
    }

    fn preschedule(&mut self, source: FrameSource) -> Result<(), RunError> {
        let s = self.s;
        // (t, rank, agent, sensor, kind)
        let mut initial: Vec<(f64, u8, usize, usize, EventKind)> = Vec::new();
        let ticks: Vec<(f64, usize, usize)> = match source {
            FrameSource::Live => s
                .agents
                .iter()
                .enumerate()
                .flat_map(|(ai, a)| {
                    a.sensors
                        .iter()
                        .enumerate()
                        .flat_map(move |(si, sn)| rate_grid(sn.rate(), s.duration).into_iter().map(move |t| (t, ai, si)))
                })
                .collect(),
            FrameSource::Recorded(frames) => {
                let mut out = Vec::new();
                for f in frames {
                    let ai = s
                        .agent_index(&f.agent)
                        .ok_or_else(|| fail(f.t, format!("recorded frame for unknown agent {}", f.agent)))?;
                    match s.agents[ai].sensors.get(f.sensor) {
                        Some(sn) if sn.kind == f.data.kind() => {}
                        _ => return Err(fail(f.t, format!("recorded frame does not match agent {} sensor {}", f.agent, f.sensor))),
                    }
                    if self.recorded.insert((ai, f.sensor, bits(f.t)), f.data).is_some() {
                        return Err(fail(f.t, format!("duplicate frame for agent {} sensor {}", f.agent, f.sensor)));
                    }
                    out.push((f.t, ai, f.sensor));
                }
                out
            }
        };
        for (ai, a) in s.agents.iter().enumerate() {
            let primary = a.sensor_index(SensorKind::Camera).or_else(|| a.sensor_index(SensorKind::Radar));
            let Some(p) = primary else { continue };
            let frame_times: Vec<u64> = ticks.iter().filter(|x| x.1 == ai && x.2 == p).map(|x| bits(x.0)).collect();
            let exp = &mut self.agents[ai].expected;
            for tb in frame_times {
                exp.insert(tb, 0);
            }
            for x in ticks.iter().filter(|x| x.1 == ai) {
                if let Some(n) = exp.get_mut(&bits(x.0)) {
                    *n += 1;
                }
            }
        }
        for (t, agent, sensor) in ticks {
            initial.push((t, 0, agent, sensor, EventKind::SensorTick { agent, sensor }));
        }
        let timers = |kind: TimerKind, agent: usize, times: Vec<f64>, out: &mut Vec<(f64, u8, usize, usize, EventKind)>| {
            let rank = 1 + kind as u8;
            out.extend(times.into_iter().map(|t| (t, rank, agent, 0, EventKind::Timer { kind, agent })));
        };
        match self.mode {
            Mode::Cr => {}
            Mode::CrCovi => {
                for (ai, a) in s.agents.iter().enumerate() {
                    if ai != self.ego && !a.sensors.is_empty() && matches!(a.kind, AgentKind::Vehicle | AgentKind::Infrastructure) {
                        timers(TimerKind::Broadcast, ai, rate_grid(s.pipeline.collab.broadcast_rate, s.duration), &mut initial);
                    }
                }
            }
            Mode::CrDist => {
                let o = &s.pipeline.offload;
                for (ai, a) in s.agents.iter().enumerate() {
                    if a.kind == AgentKind::EdgeServer {
                        timers(TimerKind::Heartbeat, ai, period_grid(o.heartbeat_interval, s.duration), &mut initial);
                    }
                }
                timers(TimerKind::TaskSubmit, self.ego, period_grid(o.task_period, s.duration), &mut initial);
                timers(TimerKind::Reap, self.ego, period_grid(o.reap_period, s.duration), &mut initial);
            }
        }
        let id = |i: usize| s.agents[i].id.as_str();
        initial.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(id(a.2).cmp(id(b.2)))
                .then(a.3.cmp(&b.3))
        });
        for (t, _, _, _, kind) in initial {
            self.push(t, kind);
        }
        Ok(())
    }

    fn count(&mut self, name: &str) {
        *self.event_counts.entry(name.to_string()).or_insert(0) += 1;
    }

    fn run(mut self) -> Result<RunOutput, RunError> {
        let s = self.s;
        if self.opts.record {
            let header = serde_json::json!({ "scenario": s });
            self.recording.push(serde_json::to_string(&header).expect("header serializes"));
        }
        self.log.log(
            LogLevel::Info,
            0.0,
            "engine",
            format!("start scenario={} mode={} seed={} agents={}", s.name, self.mode, s.seed, s.agents.len()),
        );
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.t > s.duration {
                self.count("dropped_after_end");
                if matches!(ev.kind, EventKind::BusDeliver { .. }) {
                    self.bus.undelivered += 1;
                }
                continue;
            }
            if let Some(prev) = self.last_popped {
                debug_assert!(prev < (ev.t, ev.seq) || (prev.0 < ev.t), "event order");
            }
            self.last_popped = Some((ev.t, ev.seq));
            self.handle(ev)?;
        }
        self.finish()
    }

    fn handle(&mut self, ev: Event) -> Result<(), RunError> {
        let t = ev.t;
        match ev.kind {
            EventKind::SensorTick { agent, sensor } => {
                let kind = self.s.agents[agent].sensors[sensor].kind;
                self.count("sensor_tick");
                self.count(&format!("sensor_tick.{}", kind.name()));
                self.sensor_tick(t, agent, sensor)
            }
            EventKind::BusDeliver { to, bytes } => {
                self.count("bus_deliver");
                self.bus.delivered += 1;
                self.bus_deliver(t, to, &bytes)
            }
            EventKind::TaskComplete { worker, result } => {
                self.count("task_complete");
                self.task_complete(t, worker, result)
            }
            EventKind::MetricSample => {
                self.count("metric_sample");
                self.metric_sample(t)
            }
            EventKind::Timer { kind, agent } => {
                self.count(kind.name());
                match kind {
                    TimerKind::Heartbeat => self.heartbeat(t, agent),
                    TimerKind::Broadcast => self.broadcast(t, agent),
                    TimerKind::TaskSubmit => self.task_submit(t),
                    TimerKind::Reap => self.reap(t),
                }
            }
        }
    }

    /// Encodes, records and routes a frame. Returns the encoded bytes.
    fn publish(&mut self, t: f64, from: usize, msg_type: MsgType, topic: String, payload: Vec<u8>) -> Result<Vec<u8>, RunError> {
        let frame = BusFrame::new(msg_type, seconds_to_ns(t), topic, payload);
        let bytes = encode(&frame).map_err(|e| fail(t, e))?;
        self.bus.published += 1;
        self.bus.bytes += bytes.len() as u64;
        *self.bus.by_type.entry(msg_type.name().to_string()).or_insert(0) += 1;
        self.bus_frames.push(BusRecord {
            t,
            from: self.s.agents[from].id.clone(),
            msg_type: msg_type.name().to_string(),
            topic: frame.topic.clone(),
            bytes: hex::encode(&bytes),
        });
        for to in self.router.route(&frame.topic) {
            if to == from {
                continue;
            }
            let link = Link::new(&self.s.agents[from].id, &self.s.agents[to].id);
            let seed = self.s.seed;
            let rng = self
                .link_rngs
                .entry((from, to))
                .or_insert_with(|| stream(seed, &link_key(&link.from, &link.to)));
            self.bus.sent += 1;
            match self.net.deliver(&link, t, rng).map_err(|e| fail(t, e))? {
                Delivery::Delivered { at } => self.push(at, EventKind::BusDeliver { to, bytes: bytes.clone() }),
                Delivery::Dropped => {
                    self.bus.dropped += 1;
                    self.log.log(LogLevel::Debug, t, "bus", format!("dropped {} on {link}", msg_type.name()));
                }
            }
        }
        Ok(bytes)
    }

    fn sensor_tick(&mut self, t: f64, ai: usize, si: usize) -> Result<(), RunError> {
        let s = self.s;
        let agent = &s.agents[ai];
        let spec = &agent.sensors[si];
        let data = match self.recorded.remove(&(ai, si, bits(t))) {
            Some(d) => d,
            None => {
                let truth = self.truth.at(t)?;
                let world_from_sensor = agent.world_from_agent(t).compose(&spec.agent_from_sensor());
                let noise = spec.noise();
                let id = format!("{}/{}", agent.id, si);
                let rng = &mut self.agents[ai].sensor_rngs[si];
                match spec.kind {
                    SensorKind::Camera => {
                        let k = spec.intrinsics.expect("normalized camera has intrinsics");
                        SensorData::Camera(camera_observe(&k, &world_from_sensor, &truth, &noise, rng, &id, t))
                    }
                    SensorKind::Radar => {
                        SensorData::Radar(radar_observe(&world_from_sensor, &agent.velocity(t), &truth, &noise, rng, &id, t))
                    }
                }
            }
        };
        let frame = SensorFrame {
            t,
            agent: agent.id.clone(),
            sensor: si,
            data,
        };
        let payload = canonical(&frame);
        if self.opts.record {
            self.recording.push(String::from_utf8(payload.clone()).expect("canonical JSON is UTF-8"));
        }
        // intra-agent hop: zero latency, consumed from the wire bytes
        let bytes = self.publish(t, ai, MsgType::Detections, format!("detections/{}/{si}", agent.id), payload)?;
        let (decoded, _) = decode(&bytes).map_err(|e| fail(t, e))?;
        let frame: SensorFrame = serde_json::from_slice(&decoded.payload).map_err(|e| fail(t, e))?;
        let rt = &mut self.agents[ai];
        match frame.data {
            SensorData::Camera(d) => rt.camera = Some((t, d)),
            SensorData::Radar(d) => rt.radar = Some((t, d)),
        }
        let ready = match rt.expected.get_mut(&bits(t)) {
            Some(n) => {
                *n -= 1;
                *n == 0
            }
            None => false,
        };
        if ready {
            rt.expected.remove(&bits(t));
            self.fuse(t, ai)?;
        }
        Ok(())
    }

    fn fuse(&mut self, t: f64, ai: usize) -> Result<(), RunError> {
        let s = self.s;
        let agent = &s.agents[ai];
        let rt = &mut self.agents[ai];
        let bboxes = match rt.camera.take() {
            Some((tc, d)) if tc == t => d,
            _ => Vec::new(),
        };
        let dets: Vec<Detection3D> = match (&rt.radar, agent.sensor_index(SensorKind::Radar)) {
            (Some((tr, points)), Some(ri)) => {
                let radar = &agent.sensors[ri];
                let world_from_radar = agent.world_from_agent(*tr).compose(&radar.agent_from_sensor());
                let assoc = match agent.sensor_index(SensorKind::Camera) {
                    Some(ci) => {
                        let cam = &agent.sensors[ci];
                        let world_from_cam = agent.world_from_agent(t).compose(&cam.agent_from_sensor());
                        let cam_from_radar = world_from_cam.inverse().compose(&world_from_radar);
                        let k = cam.intrinsics.expect("normalized camera has intrinsics");
                        frustum_associate(&bboxes, points, &k, &cam_from_radar)
                    }
                    None => crate::fusion::Association {
                        unmatched_radar: (0..points.len()).collect(),
                        ..Default::default()
                    },
                };
                synthesize(&assoc, &bboxes, points, &world_from_radar, &radar.noise())
            }
            _ => Vec::new(),
        };
        let is_ego = ai == self.ego;
        let tracker = rt.tracker.as_mut().expect("agents with sensors have a tracker");
        match tracker {
            AgentTracker::Plain(st) => st.step(&dets, t).map_err(|e| fail(t, e))?,
            AgentTracker::Replay(r) => r.process_local(dets.clone(), t).map_err(|e| fail(t, e))?,
        }
        if is_ego && self.mode == Mode::CrCovi {
            let msgs = std::mem::take(&mut rt.inbox);
            if let Some(AgentTracker::Plain(st)) = rt.tracker.as_mut() {
                let lines = self.collab.covi_step(st, &msgs, &Pose::identity(), t);
                for l in lines {
                    self.log.log(LogLevel::Warn, t, "collab", l);
                }
            }
        }
        let state = self.agents[ai].tracker.as_ref().expect("tracker").state();
        self.tracks.push(TrackRow {
            t,
            agent: agent.id.clone(),
            tracks: state.records(),
        });
        if is_ego {
            if self.opts.keep_states {
                self.diag.ego_states.push((t, state.clone()));
            }
            self.log.log(
                LogLevel::Debug,
                t,
                "tracker",
                format!("ego frame: {} detections, {} tracks", dets.len(), state.tracks.len()),
            );
            self.last_ego_frame = Some(t);
            self.last_ego_dets = dets.iter().map(|d| d.position).collect();
            self.push(t, EventKind::MetricSample);
        }
        Ok(())
    }

    fn ego_state(&self) -> &TrackerState {
        self.agents[self.ego].tracker.as_ref().expect("ego has sensors").state()
    }

    fn metric_sample(&mut self, t: f64) -> Result<(), RunError> {
        let s = self.s;
        let cfg = s.pipeline.metrics;
        let truth = self.truth.at(t)?;
        let sample = TruthSample { t, truth };
        if self.opts.record {
            self.recording.push(String::from_utf8(canonical(&sample)).expect("UTF-8"));
        }
        self.truth_seen.push(sample.clone());
        let ego_pos = s.ego().world_from_agent(t).translation;
        let near = |p: &Vec3| (p - ego_pos).norm() <= cfg.eval_range;
        let gt: Vec<(u64, Vec3)> = sample.truth.iter().filter(|o| near(&o.position)).map(|o| (o.id, o.position)).collect();
        let confirmed: Vec<(u64, Vec3)> = self
            .ego_state()
            .confirmed()
            .map(|tr| (tr.id, tr.position()))
            .filter(|(_, p)| near(p))
            .collect();
        let dets: Vec<Vec3> = self.last_ego_dets.iter().copied().filter(|p| near(p)).collect();
        self.metrics.add_detections(t, &gt, &dets);
        let f = self.metrics.add_tracks(t, &gt, &confirmed).clone();
        let ospa = self.metrics.ospa.last().map_or(0.0, |o| o.value);
        self.samples.push(SampleRecord {
            t,
            gt: gt.len() as u64,
            confirmed: confirmed.len() as u64,
            matches: f.matches.len() as u64,
            fp: f.fp,
            fn_: f.fn_,
            ospa,
        });
        if t + cfg.prediction_horizon <= s.duration {
            for &(gid, tid, _) in &f.matches {
                if let Some(tr) = self.ego_state().tracks.iter().find(|x| x.id == tid) {
                    if let Ok(traj) = predict_trajectory(tr, cfg.prediction_horizon, cfg.prediction_step) {
                        self.predictions.push((gid, traj));
                    }
                }
            }
        }
        Ok(())
    }

    fn broadcast(&mut self, t: f64, ai: usize) -> Result<(), RunError> {
        let agent = &self.s.agents[ai];
        let Some(tr) = self.agents[ai].tracker.as_ref() else {
            return Ok(());
        };
        let state = tr.state();
        let Some(ts) = state.time else {
            return Ok(());
        };
        let world_from_agent = agent.world_from_agent(ts);
        let agent_from_world = world_from_agent.inverse();
        let mut tracks = Vec::new();
        for track in state.confirmed() {
            let (mean, cov) = transform_gaussian(&agent_from_world, &track.mean, &track.cov).map_err(|e| fail(t, e))?;
            tracks.push(RemoteTrack {
                remote_id: track.id,
                mean,
                cov,
            });
        }
        let msg = RemoteTrackMsg {
            sender_id: agent.id.clone(),
            sender_pose: world_from_agent.into(),
            timestamp: ts,
            tracks,
        };
        self.publish(t, ai, MsgType::Tracks, format!("tracks/{}", agent.id), canonical(&msg))?;
        Ok(())
    }

    fn heartbeat(&mut self, t: f64, ai: usize) -> Result<(), RunError> {
        let id = self.s.agents[ai].id.clone();
        let payload = canonical(&serde_json::json!({ "worker": id, "t": t }));
        self.publish(t, ai, MsgType::Heartbeat, format!("heartbeat/{id}"), payload)?;
        Ok(())
    }

    fn send_task(&mut self, t: f64, task_id: u64, worker: &str) -> Result<(), RunError> {
        let broker = self.broker.as_ref().expect("cr-dist broker");
        let req = broker.pending.get(&task_id).expect("dispatched task is pending").request.clone();
        self.publish(t, self.ego, MsgType::TaskReq, format!("tasks/{worker}"), canonical(&req))?;
        Ok(())
    }

    fn task_submit(&mut self, t: f64) -> Result<(), RunError> {
        let s = self.s;
        let Some(frame_time) = self.last_ego_frame else {
            return Ok(());
        };
        if self.last_task_frame == Some(frame_time) {
            return Ok(());
        }
        self.last_task_frame = Some(frame_time);
        let ego = s.ego();
        let cam = &ego.sensors[ego.sensor_index(SensorKind::Camera).expect("validated: ego camera")];
        let world_from_cam = ego.world_from_agent(frame_time).compose(&cam.agent_from_sensor());
        let truth = self.truth.at(frame_time)?;
        let k = cam.intrinsics.expect("camera intrinsics");
        let ids = visible_boxes(&k, &world_from_cam, &truth, cam.noise().max_range)
            .into_iter()
            .map(|v| v.object_id)
            .collect();
        let payload = StereoPayload {
            object_ids: ids,
            world_from_sensor: world_from_cam.into(),
        };
        let broker = self.broker.as_mut().expect("cr-dist broker");
        let task_id = broker.next_task_id();
        let req = TaskRequest {
            task_id,
            kind: STEREO_TASK.into(),
            frame_time,
            payload: canonical(&payload),
        };
        match broker.submit(req, t) {
            Ok(Dispatch::Worker(w)) => self.send_task(t, task_id, &w)?,
            Ok(Dispatch::Queued) => self.log.log(LogLevel::Debug, t, "offload", format!("task {task_id} queued")),
            Err(e) => self.log.log(LogLevel::Warn, t, "offload", e.to_string()),
        }
        Ok(())
    }

    fn reap(&mut self, t: f64) -> Result<(), RunError> {
        let out = self.broker.as_mut().expect("cr-dist broker").reap_timeouts(t);
        for w in &out.deregistered {
            self.log.log(LogLevel::Warn, t, "offload", format!("worker {w} deregistered"));
        }
        for id in &out.dropped {
            self.log.log(LogLevel::Info, t, "offload", format!("task {id} dropped"));
        }
        for (id, w) in out.redispatched {
            self.send_task(t, id, &w)?;
        }
        Ok(())
    }

    fn worker_start(&mut self, t: f64, wi: usize, req: TaskRequest) -> Result<(), RunError> {
        let truth = self.truth.at(req.frame_time)?;
        let id = self.s.agents[wi].id.clone();
        let w = self.agents[wi].worker.as_mut().expect("edge worker runtime");
        let result = emulate_worker(&req, &truth, &w.cfg, &mut w.rng, &id).map_err(|e| fail(t, e))?;
        w.busy = true;
        let at = t + result.compute_latency;
        self.push(at, EventKind::TaskComplete { worker: wi, result });
        Ok(())
    }

    fn task_complete(&mut self, t: f64, wi: usize, result: TaskResult) -> Result<(), RunError> {
        let ego_id = self.s.agents[self.ego].id.clone();
        self.publish(t, wi, MsgType::TaskResp, format!("results/{ego_id}"), canonical(&result))?;
        let w = self.agents[wi].worker.as_mut().expect("edge worker runtime");
        w.busy = false;
        if let Some(next) = w.queue.pop_front() {
            self.worker_start(t, wi, next)?;
        }
        Ok(())
    }

    fn bus_deliver(&mut self, t: f64, to: usize, bytes: &[u8]) -> Result<(), RunError> {
        let (frame, _) = decode(bytes).map_err(|e| fail(t, e))?;
        let bad = |e: serde_json::Error| fail(t, format!("bad {} payload: {e}", frame.msg_type.name()));
        match frame.msg_type {
            MsgType::Tracks => {
                let msg: RemoteTrackMsg = serde_json::from_slice(&frame.payload).map_err(bad)?;
                self.agents[to].inbox.push(msg);
            }
            MsgType::TaskReq => {
                let req: TaskRequest = serde_json::from_slice(&frame.payload).map_err(bad)?;
                let w = self.agents[to].worker.as_mut().ok_or_else(|| fail(t, "task sent to a non-worker"))?;
                if w.busy {
                    w.queue.push_back(req);
                } else {
                    self.worker_start(t, to, req)?;
                }
            }
            MsgType::TaskResp => {
                let res: TaskResult = serde_json::from_slice(&frame.payload).map_err(bad)?;
                self.on_result(t, res)?;
            }
            MsgType::Heartbeat => {
                #[derive(serde::Deserialize)]
                struct Hb {
                    worker: String,
                }
                let hb: Hb = serde_json::from_slice(&frame.payload).map_err(bad)?;
                let sent = self.broker.as_mut().expect("cr-dist broker").on_heartbeat(&hb.worker, t);
                for (id, w) in sent {
                    self.send_task(t, id, &w)?;
                }
            }
            MsgType::Detections | MsgType::Clock => {}
        }
        Ok(())
    }

    fn on_result(&mut self, t: f64, res: TaskResult) -> Result<(), RunError> {
        let broker = self.broker.as_mut().expect("cr-dist broker");
        let task_id = res.task_id;
        match broker.on_result(res) {
            None => self.log.log(LogLevel::Debug, t, "offload", format!("late result for task {task_id} ignored")),
            Some(r) if r.status == TaskStatus::Ok => {
                let Some(AgentTracker::Replay(rt)) = self.agents[self.ego].tracker.as_mut() else {
                    return Err(fail(t, "cr-dist ego lacks a replay tracker"));
                };
                let outcome = rt.integrate(r.detections, r.frame_time).map_err(|e| fail(t, e))?;
                self.broker.as_mut().expect("broker").record_integration(outcome);
                self.diag.outcomes.push(outcome);
                let level = if outcome == IntegrateOutcome::Stale { LogLevel::Info } else { LogLevel::Debug };
                self.log.log(level, t, "offload", format!("task {task_id} frame {}: {outcome:?}", r.frame_time));
            }
            Some(r) => self.log.log(LogLevel::Info, t, "offload", format!("task {task_id} {:?}", r.status)),
        }
        let sent = self.broker.as_mut().expect("broker").drain_queue();
        for (id, w) in sent {
            self.send_task(t, id, &w)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunOutput, RunError> {
        let s = self.s;
        if let Some(b) = self.broker.as_mut() {
            b.finish();
        }
        for (gid, traj) in std::mem::take(&mut self.predictions) {
            if let Ok((ade, fde)) = prediction_error(&traj, |tau| self.truth_seen.position_of(gid, tau), s.duration) {
                self.metrics.add_prediction(ade, fde);
            }
        }
        let collab = (self.mode == Mode::CrCovi).then_some(self.collab.counters);
        let offload = self.broker.as_ref().map(|b| b.counters.clone());
        let metrics = self.metrics.report(collab, offload);
        if let Some(AgentTracker::Replay(rt)) = self.agents[self.ego].tracker.as_ref() {
            self.diag.batches = rt.log().to_vec();
        }
        self.diag.ego_final = Some(self.ego_state().clone());
        let report = RunReport {
            scenario: s.clone(),
            mode: self.mode.name().to_string(),
            seed: s.seed,
            metrics,
            samples: self.samples,
            event_counts: self.event_counts,
            bus: self.bus,
            bus_frames: self.bus_frames,
            tracks: self.tracks,
        };
        self.log.log(LogLevel::Info, s.duration, "engine", report.summary());
        Ok(RunOutput {
            report,
            recording: self.recording,
            log: self.log.lines,
            diagnostics: self.diag,
        })
    }
}

/// Runs a validated scenario with its sensor models and analytic truth.
pub fn run_scenario(s: &Scenario, opts: RunOptions) -> Result<RunOutput, RunError> {
    Engine::new(s, FrameSource::Live, Truth::Analytic(s), opts)?.run()
}

/// Runs with an explicit frame source. `truth` replaces the scenario's
/// analytic object motion when given.
pub fn run(s: &Scenario, source: FrameSource, truth: Option<TruthTable>, opts: RunOptions) -> Result<RunOutput, RunError> {
    let truth = match truth {
        Some(tab) => Truth::Table(tab),
        None => Truth::Analytic(s),
    };
    Engine::new(s, source, truth, opts)?.run()
}
