//! Edge offloading: a broker that dispatches perception tasks to edge
//! workers, the emulated worker itself, and late-result integration.
//!
//! All broker transitions are driven by calls corresponding to received
//! messages (`on_result`, `on_heartbeat`) or timer events (`reap_timeouts`),
//! so the same state machine works whether workers are simulated actors or
//! separate processes on the bus.

pub mod rollback;

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{polar_covariance, Detection3D, DetectionSource};
use crate::geometry::{Pose, PoseRecord};
use crate::rng::{bernoulli, gauss, uniform};
use crate::sensing::{from_polar, to_polar, GroundTruthObject, SensorNoiseConfig};

pub use rollback::{in_order_oracle, Batch, BatchKey, IntegrateOutcome, ReplayTracker, CLASS_EDGE, CLASS_LOCAL};

pub const STEREO_TASK: &str = "stereo-depth";
pub const EDGE_DETECTION_SCORE: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OffloadError {
    #[error("pending queue full ({bound}); task {task_id} dropped")]
    QueueFull { task_id: u64, bound: usize },
    #[error("unknown task {0}")]
    UnknownTask(u64),
    #[error("bad task payload: {0}")]
    BadPayload(String),
    #[error("invalid offload config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffloadConfig {
    /// Seconds between stereo task submissions by the ego.
    pub task_period: f64,
    pub timeout: f64,
    pub queue_bound: usize,
    pub heartbeat_interval: f64,
    /// Heartbeat intervals a worker may miss before deregistration.
    pub heartbeat_misses: u32,
    pub snapshot_horizon: f64,
    pub reap_period: f64,
}

impl Default for OffloadConfig {
    fn default() -> Self {
        Self {
            task_period: 0.2,
            timeout: 1.0,
            queue_bound: 16,
            heartbeat_interval: 0.5,
            heartbeat_misses: 3,
            snapshot_horizon: 1.0,
            reap_period: 0.1,
        }
    }
}

impl OffloadConfig {
    pub fn validate(&self) -> Result<(), OffloadError> {
        let positive = [
            ("task_period", self.task_period),
            ("timeout", self.timeout),
            ("heartbeat_interval", self.heartbeat_interval),
            ("snapshot_horizon", self.snapshot_horizon),
            ("reap_period", self.reap_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(OffloadError::InvalidConfig(format!("{name} > 0")));
            }
        }
        if self.heartbeat_misses == 0 {
            return Err(OffloadError::InvalidConfig("heartbeat_misses >= 1".into()));
        }
        Ok(())
    }
}

/// Edge worker behaviour: compute latency range, failure rate and the
/// measurement accuracy of the emulated stereo detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    pub lat_min: f64,
    pub lat_max: f64,
    pub p_fail: f64,
    pub accuracy: SensorNoiseConfig,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            lat_min: 0.1,
            lat_max: 0.3,
            p_fail: 0.0,
            accuracy: SensorNoiseConfig {
                pixel_sigma: 0.0,
                range_sigma: 0.05,
                azimuth_sigma: 0.005,
                speed_sigma: 0.05,
                p_detect: 0.99,
                clutter_rate: 0.0,
                fov_azimuth: std::f64::consts::TAU,
                max_range: 1000.0,
            },
        }
    }
}

impl WorkerConfig {
    pub fn validate(&self) -> Result<(), OffloadError> {
        if !(self.lat_min.is_finite() && self.lat_min >= 0.0 && self.lat_max >= self.lat_min && self.lat_max.is_finite()) {
            return Err(OffloadError::InvalidConfig("0 <= lat_min <= lat_max".into()));
        }
        if !(0.0..=1.0).contains(&self.p_fail) {
            return Err(OffloadError::InvalidConfig("0 <= p_fail <= 1".into()));
        }
        self.accuracy.validate().map_err(OffloadError::InvalidConfig)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRequest {
    pub task_id: u64,
    pub kind: String,
    pub frame_time: f64,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskResult {
    pub task_id: u64,
    pub status: TaskStatus,
    pub frame_time: f64,
    pub detections: Vec<Detection3D>,
    pub compute_latency: f64,
    pub worker: String,
}

/// Stand-in for a stereo image pair: the ground-truth objects the ego
/// camera sees at `frame_time` and where the camera is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoPayload {
    pub object_ids: Vec<u64>,
    pub world_from_sensor: PoseRecord,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Runs the emulated stereo detector. The caller schedules the result at
/// request arrival + `compute_latency`.
pub fn emulate_worker<R: Rng + ?Sized>(
    req: &TaskRequest,
    truth: &[GroundTruthObject],
    cfg: &WorkerConfig,
    rng: &mut R,
    worker: &str,
) -> Result<TaskResult, OffloadError> {
    let compute_latency = uniform(rng, cfg.lat_min, cfg.lat_max);
    let mut result = TaskResult {
        task_id: req.task_id,
        status: TaskStatus::Ok,
        frame_time: req.frame_time,
        detections: Vec::new(),
        compute_latency,
        worker: worker.to_string(),
    };
    if bernoulli(rng, cfg.p_fail) {
        result.status = TaskStatus::Failed;
        return Ok(result);
    }
    let payload: StereoPayload =
        serde_json::from_slice(&req.payload).map_err(|e| OffloadError::BadPayload(e.to_string()))?;
    let world_from_sensor = Pose::from(payload.world_from_sensor);
    let sensor_from_world = world_from_sensor.inverse();
    let acc = &cfg.accuracy;
    for id in &payload.object_ids {
        let Some(obj) = truth.iter().find(|o| o.id == *id) else {
            continue;
        };
        let p = sensor_from_world.transform_point(&obj.position);
        let (range, az, el) = to_polar(&p);
        let dr = gauss(rng, acc.range_sigma);
        let daz = gauss(rng, acc.azimuth_sigma);
        let del = gauss(rng, acc.azimuth_sigma);
        let ds = gauss(rng, acc.speed_sigma);
        if !bernoulli(rng, acc.p_detect) {
            continue;
        }
        let (position, p_meas) = if dr == 0.0 && daz == 0.0 && del == 0.0 {
            (obj.position, p)
        } else {
            let pm = from_polar((range + dr).max(1e-3), az + daz, el + del);
            (world_from_sensor.transform_point(&pm), pm)
        };
        let radial = if range > 0.0 {
            p.dot(&sensor_from_world.transform_vector(&obj.velocity)) / range
        } else {
            0.0
        };
        result.detections.push(Detection3D {
            position,
            radial_speed: radial + ds,
            cov: polar_covariance(&p_meas, acc.range_sigma, acc.azimuth_sigma, &world_from_sensor),
            source: DetectionSource::Edge,
            score: EDGE_DETECTION_SCORE,
            timestamp: req.frame_time,
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSlot {
    pub id: String,
    /// Task currently assigned, if any.
    pub busy: Option<u64>,
    pub last_heartbeat: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerPool {
    pub workers: Vec<WorkerSlot>,
    pub rr_cursor: usize,
}

impl WorkerPool {
    pub fn register(&mut self, id: &str, t: f64) {
        match self.workers.iter_mut().find(|w| w.id == id) {
            Some(w) => w.last_heartbeat = t,
            None => self.workers.push(WorkerSlot {
                id: id.to_string(),
                busy: None,
                last_heartbeat: t,
            }),
        }
    }

    /// Round-robin pick of an idle worker, starting at the cursor.
    pub fn assign(&mut self, task_id: u64) -> Option<String> {
        let n = self.workers.len();
        for k in 0..n {
            let i = (self.rr_cursor + k) % n;
            if self.workers[i].busy.is_none() {
                self.workers[i].busy = Some(task_id);
                self.rr_cursor = (i + 1) % n;
                return Some(self.workers[i].id.clone());
            }
        }
        None
    }

    pub fn release(&mut self, worker: &str, task_id: u64) {
        if let Some(w) = self.workers.iter_mut().find(|w| w.id == worker && w.busy == Some(task_id)) {
            w.busy = None;
        }
    }

    fn remove(&mut self, i: usize) -> WorkerSlot {
        let w = self.workers.remove(i);
        if i < self.rr_cursor {
            self.rr_cursor -= 1;
        }
        if self.rr_cursor >= self.workers.len() {
            self.rr_cursor = 0;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dispatch {
    Worker(String),
    Queued,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingTask {
    pub request: TaskRequest,
    pub attempts: u32,
    pub sent_at: f64,
    pub worker: Option<String>,
}

/// Terminal outcome tallies; after `finish` they sum to `submitted`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadCounters {
    pub submitted: u64,
    pub ok_integrated: u64,
    pub failed: u64,
    pub timeout_dropped: u64,
    pub stale_dropped: u64,
    pub queue_dropped: u64,
    pub retried: u64,
    pub late_ignored: u64,
    pub workers_deregistered: u64,
}

impl OffloadCounters {
    pub fn terminated(&self) -> u64 {
        self.ok_integrated + self.failed + self.timeout_dropped + self.stale_dropped + self.queue_dropped
    }

    pub fn balanced(&self) -> bool {
        self.terminated() == self.submitted
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReapOutcome {
    /// Retries sent straight to a worker.
    pub redispatched: Vec<(u64, String)>,
    pub dropped: Vec<u64>,
    pub deregistered: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Broker {
    pub config: OffloadConfig,
    pub pool: WorkerPool,
    pub queue: VecDeque<u64>,
    pub pending: BTreeMap<u64, PendingTask>,
    pub counters: OffloadCounters,
    next_task_id: u64,
}

impl Broker {
    pub fn new(config: OffloadConfig) -> Result<Self, OffloadError> {
        config.validate()?;
        Ok(Self {
            config,
            pool: WorkerPool::default(),
            queue: VecDeque::new(),
            pending: BTreeMap::new(),
            counters: OffloadCounters::default(),
            next_task_id: 1,
        })
    }

    pub fn next_task_id(&mut self) -> u64 {
        let id = self.next_task_id;
        self.next_task_id += 1;
        id
    }

    pub fn submit(&mut self, request: TaskRequest, t: f64) -> Result<Dispatch, OffloadError> {
        self.counters.submitted += 1;
        let id = request.task_id;
        self.pending.insert(
            id,
            PendingTask {
                request,
                attempts: 1,
                sent_at: t,
                worker: None,
            },
        );
        self.dispatch(id)
    }

    /// Assigns a pending task to an idle worker or queues it.
    pub fn dispatch(&mut self, task_id: u64) -> Result<Dispatch, OffloadError> {
        if !self.pending.contains_key(&task_id) {
            return Err(OffloadError::UnknownTask(task_id));
        }
        if let Some(w) = self.pool.assign(task_id) {
            self.pending.get_mut(&task_id).expect("checked").worker = Some(w.clone());
            return Ok(Dispatch::Worker(w));
        }
        if self.queue.len() >= self.config.queue_bound {
            self.pending.remove(&task_id);
            self.counters.queue_dropped += 1;
            return Err(OffloadError::QueueFull {
                task_id,
                bound: self.config.queue_bound,
            });
        }
        self.queue.push_back(task_id);
        Ok(Dispatch::Queued)
    }

    /// Moves queued tasks onto idle workers, oldest first.
    pub fn drain_queue(&mut self) -> Vec<(u64, String)> {
        let mut sent = Vec::new();
        while let Some(&id) = self.queue.front() {
            let Some(w) = self.pool.assign(id) else {
                break;
            };
            self.queue.pop_front();
            self.pending.get_mut(&id).expect("queued tasks are pending").worker = Some(w.clone());
            sent.push((id, w));
        }
        sent
    }

    pub fn on_heartbeat(&mut self, worker: &str, t: f64) -> Vec<(u64, String)> {
        self.pool.register(worker, t);
        self.drain_queue()
    }

    /// Accepts a worker's result. Returns it when the task was still
    /// pending; late results for already-terminated tasks are ignored.
    /// The caller reports the terminal outcome of `Ok` results through
    /// `record_integration`.
    pub fn on_result(&mut self, result: TaskResult) -> Option<TaskResult> {
        self.pool.release(&result.worker, result.task_id);
        let live = match self.pending.get(&result.task_id) {
            Some(p) => p.worker.as_deref() == Some(result.worker.as_str()),
            None => false,
        };
        if !live {
            self.counters.late_ignored += 1;
            return None;
        }
        self.pending.remove(&result.task_id);
        match result.status {
            TaskStatus::Ok => {}
            TaskStatus::Failed => self.counters.failed += 1,
            TaskStatus::Timeout => self.counters.timeout_dropped += 1,
        }
        Some(result)
    }

    pub fn record_integration(&mut self, outcome: IntegrateOutcome) {
        match outcome {
            IntegrateOutcome::Stale => self.counters.stale_dropped += 1,
            _ => self.counters.ok_integrated += 1,
        }
    }

    fn expire(&mut self, task_id: u64, t: f64, out: &mut ReapOutcome) {
        let Some(p) = self.pending.get_mut(&task_id) else {
            return;
        };
        if let Some(w) = p.worker.take() {
            self.pool.release(&w, task_id);
        }
        if p.attempts >= 2 {
            self.pending.remove(&task_id);
            self.queue.retain(|&q| q != task_id);
            self.counters.timeout_dropped += 1;
            out.dropped.push(task_id);
            return;
        }
        p.attempts += 1;
        p.sent_at = t;
        self.counters.retried += 1;
        if self.queue.contains(&task_id) {
            return;
        }
        match self.dispatch(task_id) {
            Ok(Dispatch::Worker(w)) => out.redispatched.push((task_id, w)),
            Ok(Dispatch::Queued) => {}
            Err(_) => out.dropped.push(task_id),
        }
    }

    /// Timer handler: deregisters silent workers, then retries or drops
    /// every request older than the timeout.
    pub fn reap_timeouts(&mut self, t: f64) -> ReapOutcome {
        let mut out = ReapOutcome::default();
        let deadline = self.config.heartbeat_interval * self.config.heartbeat_misses as f64;
        let mut i = 0;
        let mut orphaned = Vec::new();
        while i < self.pool.workers.len() {
            if t - self.pool.workers[i].last_heartbeat > deadline {
                let w = self.pool.remove(i);
                self.counters.workers_deregistered += 1;
                if let Some(task) = w.busy {
                    orphaned.push(task);
                }
                out.deregistered.push(w.id);
            } else {
                i += 1;
            }
        }
        for task in orphaned {
            if let Some(p) = self.pending.get_mut(&task) {
                p.worker = None;
            }
            self.expire(task, t, &mut out);
        }
        let expired: Vec<u64> = self
            .pending
            .iter()
            .filter(|(_, p)| t - p.sent_at > self.config.timeout)
            .map(|(&id, _)| id)
            .collect();
        for id in expired {
            self.expire(id, t, &mut out);
        }
        for (id, w) in self.drain_queue() {
            out.redispatched.push((id, w));
        }
        out
    }

    /// End of run: anything still outstanding counts as timed out.
    pub fn finish(&mut self) {
        self.counters.timeout_dropped += self.pending.len() as u64;
        self.pending.clear();
        self.queue.clear();
        for w in &mut self.pool.workers {
            w.busy = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::rng::stream;

    fn req(id: u64) -> TaskRequest {
        TaskRequest {
            task_id: id,
            kind: STEREO_TASK.into(),
            frame_time: 0.0,
            payload: Vec::new(),
        }
    }

    fn broker(workers: &[&str]) -> Broker {
        let mut b = Broker::new(OffloadConfig::default()).unwrap();
        for w in workers {
            b.pool.register(w, 0.0);
        }
        b
    }

    fn ok(id: u64, worker: &str) -> TaskResult {
        TaskResult {
            task_id: id,
            status: TaskStatus::Ok,
            frame_time: 0.0,
            detections: vec![],
            compute_latency: 0.1,
            worker: worker.into(),
        }
    }

    #[test]
    fn round_robin_then_queue() {
        let mut b = broker(&["w0", "w1"]);
        assert_eq!(b.submit(req(1), 0.0).unwrap(), Dispatch::Worker("w0".into()));
        assert_eq!(b.submit(req(2), 0.0).unwrap(), Dispatch::Worker("w1".into()));
        assert_eq!(b.submit(req(3), 0.0).unwrap(), Dispatch::Queued);
    }

    #[test]
    fn no_workers_queues() {
        let mut b = broker(&[]);
        assert_eq!(b.submit(req(1), 0.0).unwrap(), Dispatch::Queued);
        assert!(b.pool.rr_cursor < 1);
    }

    #[test]
    fn skips_busy_worker() {
        let mut b = broker(&["w0", "w1"]);
        b.pool.workers[0].busy = Some(99);
        assert_eq!(b.submit(req(1), 0.0).unwrap(), Dispatch::Worker("w1".into()));
    }

    #[test]
    fn queue_bound_enforced() {
        let mut b = broker(&[]);
        for id in 1..=16 {
            assert_eq!(b.submit(req(id), 0.0).unwrap(), Dispatch::Queued);
        }
        assert!(matches!(b.submit(req(17), 0.0), Err(OffloadError::QueueFull { task_id: 17, bound: 16 })));
        assert_eq!(b.counters.queue_dropped, 1);
        assert!(!b.pending.contains_key(&17));
    }

    #[test]
    fn round_robin_fairness_with_completions() {
        let mut b = broker(&["a", "b", "c"]);
        let mut counts = BTreeMap::new();
        for id in 1..=100 {
            let Dispatch::Worker(w) = b.submit(req(id), 0.0).unwrap() else {
                panic!("idle worker expected");
            };
            *counts.entry(w.clone()).or_insert(0) += 1;
            assert!(b.on_result(ok(id, &w)).is_some());
            b.record_integration(IntegrateOutcome::Stepped);
        }
        let v: Vec<i32> = counts.values().copied().collect();
        assert!(v.iter().max().unwrap() - v.iter().min().unwrap() <= 1);
        assert!(b.counters.balanced());
    }

    #[test]
    fn timeout_retry_then_drop() {
        let mut b = broker(&["w0"]);
        b.submit(req(1), 0.0).unwrap();
        b.on_heartbeat("w0", 1.0);
        let out = b.reap_timeouts(1.05);
        assert_eq!(out.redispatched, vec![(1, "w0".to_string())]);
        assert_eq!(b.pending[&1].attempts, 2);
        assert_eq!(b.counters.retried, 1);
        b.on_heartbeat("w0", 2.0);
        let out = b.reap_timeouts(2.1);
        assert_eq!(out.dropped, vec![1]);
        assert_eq!(b.counters.timeout_dropped, 1);
        assert!(b.counters.balanced());
        // the worker's late answer is ignored
        assert!(b.on_result(ok(1, "w0")).is_none());
        assert_eq!(b.counters.late_ignored, 1);
    }

    #[test]
    fn healthy_heartbeat_no_change() {
        let mut b = broker(&["w0"]);
        b.submit(req(1), 0.0).unwrap();
        b.on_heartbeat("w0", 0.5);
        let before = b.pending.clone();
        let out = b.reap_timeouts(0.6);
        assert_eq!(out, ReapOutcome::default());
        assert_eq!(b.pending, before);
        assert_eq!(b.pool.workers.len(), 1);
    }

    #[test]
    fn silent_worker_deregistered_and_task_requeued() {
        let mut b = broker(&["w0"]);
        b.submit(req(1), 0.0).unwrap();
        let out = b.reap_timeouts(1.6);
        assert_eq!(out.deregistered, vec!["w0".to_string()]);
        assert!(b.pool.workers.is_empty());
        assert_eq!(b.queue, VecDeque::from([1]));
        assert_eq!(b.pending[&1].attempts, 2);
        b.finish();
        assert!(b.counters.balanced());
    }

    #[test]
    fn failed_result_counted() {
        let mut b = broker(&["w0"]);
        b.submit(req(1), 0.0).unwrap();
        let mut r = ok(1, "w0");
        r.status = TaskStatus::Failed;
        assert!(b.on_result(r).is_some());
        assert_eq!(b.counters.failed, 1);
        assert!(b.counters.balanced());
    }

    #[test]
    fn queue_drains_on_completion() {
        let mut b = broker(&["w0"]);
        b.submit(req(1), 0.0).unwrap();
        b.submit(req(2), 0.0).unwrap();
        b.on_result(ok(1, "w0")).unwrap();
        assert_eq!(b.drain_queue(), vec![(2, "w0".to_string())]);
    }

    fn stereo_req(ids: Vec<u64>) -> TaskRequest {
        let payload = StereoPayload {
            object_ids: ids,
            world_from_sensor: Pose::from_translation(vec3(1.0, 2.0, 0.0)).into(),
        };
        TaskRequest {
            task_id: 7,
            kind: STEREO_TASK.into(),
            frame_time: 3.0,
            payload: serde_json::to_vec(&payload).unwrap(),
        }
    }

    fn truth() -> Vec<GroundTruthObject> {
        vec![GroundTruthObject {
            id: 4,
            position: vec3(20.0, 3.0, 0.5),
            velocity: vec3(1.0, 0.0, 0.0),
            extent: vec3(4.0, 2.0, 1.5),
        }]
    }

    #[test]
    fn worker_fixed_latency_ok() {
        let cfg = WorkerConfig {
            lat_min: 0.2,
            lat_max: 0.2,
            ..Default::default()
        };
        let r = emulate_worker(&stereo_req(vec![4]), &truth(), &cfg, &mut stream(1, "w"), "edge").unwrap();
        assert_eq!(r.status, TaskStatus::Ok);
        assert_eq!(r.compute_latency, 0.2);
    }

    #[test]
    fn worker_always_fails() {
        let cfg = WorkerConfig {
            p_fail: 1.0,
            ..Default::default()
        };
        let r = emulate_worker(&stereo_req(vec![4]), &truth(), &cfg, &mut stream(1, "w"), "edge").unwrap();
        assert_eq!(r.status, TaskStatus::Failed);
        assert!(r.detections.is_empty());
    }

    #[test]
    fn noiseless_worker_returns_truth() {
        let cfg = WorkerConfig {
            accuracy: SensorNoiseConfig::noiseless(),
            ..Default::default()
        };
        let r = emulate_worker(&stereo_req(vec![4, 9]), &truth(), &cfg, &mut stream(1, "w"), "edge").unwrap();
        assert_eq!(r.detections.len(), 1);
        let d = &r.detections[0];
        assert_eq!(d.position, truth()[0].position);
        assert_eq!(d.source, DetectionSource::Edge);
        assert_eq!(d.timestamp, 3.0);
    }

    #[test]
    fn request_json_round_trip() {
        let r = stereo_req(vec![1, 2]);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"payload\":\"7b"));
        assert_eq!(serde_json::from_str::<TaskRequest>(&s).unwrap(), r);
    }
}
