//! Out-of-sequence result handling by snapshot rollback and replay.
//!
//! Every detection batch applied to the tracker is kept together with the
//! tracker state right after it, for `horizon` seconds. A batch older than
//! the newest one restores the latest snapshot preceding it, is applied, and
//! the later batches are re-applied in order, so the result is identical to
//! having processed everything in timestamp order.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::fusion::Detection3D;
use crate::tracker::{TrackerError, TrackerState};

/// Batch ordering: time, then class (local sensing before edge results),
/// then arrival sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchKey {
    pub t: f64,
    pub class: u8,
    pub seq: u64,
}

pub const CLASS_LOCAL: u8 = 0;
pub const CLASS_EDGE: u8 = 1;

impl BatchKey {
    fn base() -> Self {
        Self {
            t: f64::NEG_INFINITY,
            class: 0,
            seq: 0,
        }
    }
}

impl Eq for BatchKey {}

impl PartialOrd for BatchKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BatchKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.class.cmp(&other.class))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub key: BatchKey,
    pub detections: Vec<Detection3D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrateOutcome {
    /// In order; applied as a normal step.
    Stepped,
    /// Rolled back and re-applied this many later batches.
    Replayed(usize),
    /// Older than the retained horizon; tracker untouched.
    Stale,
}

#[derive(Debug, Clone)]
pub struct ReplayTracker {
    horizon: f64,
    tracker: TrackerState,
    /// `snapshots[0]` is the base state; `snapshots[i + 1]` follows `batches[i]`.
    snapshots: VecDeque<(BatchKey, TrackerState)>,
    batches: VecDeque<Batch>,
    next_seq: u64,
    replayed_batches: u64,
    /// Every accepted batch in arrival order, for oracle comparison.
    log: Vec<Batch>,
}

impl ReplayTracker {
    pub fn new(tracker: TrackerState, horizon: f64) -> Self {
        Self {
            horizon,
            snapshots: VecDeque::from([(BatchKey::base(), tracker.clone())]),
            tracker,
            batches: VecDeque::new(),
            next_seq: 1,
            replayed_batches: 0,
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> &TrackerState {
        &self.tracker
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Total batches re-applied by rollbacks so far.
    pub fn replayed_batches(&self) -> u64 {
        self.replayed_batches
    }

    pub fn log(&self) -> &[Batch] {
        &self.log
    }

    pub fn newest_time(&self) -> f64 {
        self.snapshots.back().map_or(f64::NEG_INFINITY, |(k, _)| k.t)
    }

    fn key(&mut self, t: f64, class: u8) -> BatchKey {
        let seq = self.next_seq;
        self.next_seq += 1;
        BatchKey { t, class, seq }
    }

    fn apply(&mut self, batch: Batch) -> Result<(), TrackerError> {
        self.tracker.step(&batch.detections, batch.key.t)?;
        self.snapshots.push_back((batch.key, self.tracker.clone()));
        self.batches.push_back(batch);
        Ok(())
    }

    fn trim(&mut self) {
        let cutoff = self.newest_time() - self.horizon;
        while self.snapshots.len() >= 2 && self.snapshots[1].0.t <= cutoff {
            self.snapshots.pop_front();
            self.batches.pop_front();
        }
    }

    /// Locally sensed batch at `t`, which must not precede the newest batch.
    pub fn process_local(&mut self, detections: Vec<Detection3D>, t: f64) -> Result<(), TrackerError> {
        let newest = self.newest_time();
        if t < newest {
            return Err(TrackerError::TimeReversal { t, last: newest });
        }
        let key = self.key(t, CLASS_LOCAL);
        let batch = Batch { key, detections };
        self.log.push(batch.clone());
        self.apply(batch)?;
        self.trim();
        Ok(())
    }

    /// Merges a (possibly late) edge result measured at `frame_time`.
    pub fn integrate(&mut self, detections: Vec<Detection3D>, frame_time: f64) -> Result<IntegrateOutcome, TrackerError> {
        let newest = self.newest_time();
        if frame_time < newest - self.horizon {
            return Ok(IntegrateOutcome::Stale);
        }
        let key = self.key(frame_time, CLASS_EDGE);
        self.log.push(Batch {
            key,
            detections: detections.clone(),
        });
        let last_key = self.snapshots.back().map(|(k, _)| *k).unwrap_or_else(BatchKey::base);
        if key > last_key {
            self.apply(Batch { key, detections })?;
            self.trim();
            return Ok(IntegrateOutcome::Stepped);
        }
        let restore = self
            .snapshots
            .iter()
            .rposition(|(k, _)| *k < key)
            .expect("base snapshot precedes every non-stale key");
        self.snapshots.truncate(restore + 1);
        let later: Vec<Batch> = self.batches.drain(restore..).collect();
        self.tracker = self.snapshots[restore].1.clone();
        self.apply(Batch { key, detections })?;
        let n = later.len();
        for b in later {
            self.apply(b)?;
        }
        self.replayed_batches += n as u64;
        self.trim();
        Ok(IntegrateOutcome::Replayed(n))
    }
}

/// Reference path: applies batches strictly in key order to a fresh tracker.
pub fn in_order_oracle(initial: TrackerState, mut batches: Vec<Batch>) -> Result<TrackerState, TrackerError> {
    batches.sort_by_key(|b| b.key);
    let mut t = initial;
    for b in &batches {
        t.step(&b.detections, b.key.t)?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::DetectionSource;
    use crate::geometry::{vec3, Mat3};
    use crate::tracker::TrackerConfig;

    fn det(x: f64, t: f64) -> Detection3D {
        Detection3D {
            position: vec3(x, 0.0, 0.0),
            radial_speed: 0.0,
            cov: Mat3::identity() * 0.04,
            source: DetectionSource::CameraRadar,
            score: 0.9,
            timestamp: t,
        }
    }

    fn fresh() -> TrackerState {
        TrackerState::new(TrackerConfig::default()).unwrap()
    }

    #[test]
    fn zero_latency_equals_normal_step() {
        let mut rt = ReplayTracker::new(fresh(), 1.0);
        let mut plain = fresh();
        for k in 0..10 {
            let t = k as f64 * 0.1;
            rt.process_local(vec![det(t, t)], t).unwrap();
            plain.step(&[det(t, t)], t).unwrap();
            assert_eq!(rt.integrate(vec![det(t + 0.01, t)], t).unwrap(), IntegrateOutcome::Stepped);
            plain.step(&[det(t + 0.01, t)], t).unwrap();
            assert_eq!(rt.state(), &plain);
        }
    }

    #[test]
    fn late_result_matches_oracle_bitwise() {
        let mut rt = ReplayTracker::new(fresh(), 1.0);
        let mut all = Vec::new();
        let mut seq = 0;
        for k in 0..30 {
            let t = k as f64 * 0.1;
            let d = vec![det(2.0 * t, t)];
            rt.process_local(d.clone(), t).unwrap();
            seq += 1;
            all.push(Batch {
                key: BatchKey { t, class: CLASS_LOCAL, seq },
                detections: d,
            });
            if k >= 2 && k % 2 == 0 {
                let ft = (k - 2) as f64 * 0.1;
                let e = vec![det(2.0 * ft + 0.05, ft)];
                let out = rt.integrate(e.clone(), ft).unwrap();
                assert_eq!(out, IntegrateOutcome::Replayed(2));
                seq += 1;
                all.push(Batch {
                    key: BatchKey { t: ft, class: CLASS_EDGE, seq },
                    detections: e,
                });
            }
        }
        assert_eq!(rt.log(), &all[..]);
        let oracle = in_order_oracle(fresh(), all).unwrap();
        assert_eq!(rt.state(), &oracle);
        assert_eq!(rt.replayed_batches(), 14 * 2);
    }

    #[test]
    fn stale_result_dropped() {
        let mut rt = ReplayTracker::new(fresh(), 1.0);
        for k in 0..60 {
            let t = k as f64 * 0.1;
            rt.process_local(vec![det(t, t)], t).unwrap();
        }
        let before = rt.state().clone();
        assert_eq!(rt.integrate(vec![det(0.0, 0.5)], 0.5).unwrap(), IntegrateOutcome::Stale);
        assert_eq!(rt.state(), &before);
    }

    #[test]
    fn result_at_horizon_edge_is_kept() {
        let mut rt = ReplayTracker::new(fresh(), 1.0);
        for k in 0..=20 {
            let t = k as f64 * 0.125;
            rt.process_local(vec![det(t, t)], t).unwrap();
        }
        // newest 2.5, cutoff exactly 1.5
        assert!(matches!(rt.integrate(vec![det(1.5, 1.5)], 1.5).unwrap(), IntegrateOutcome::Replayed(_)));
    }

    #[test]
    fn local_time_reversal_rejected() {
        let mut rt = ReplayTracker::new(fresh(), 1.0);
        rt.process_local(vec![], 1.0).unwrap();
        assert!(rt.process_local(vec![], 0.5).is_err());
    }

    #[test]
    fn key_order() {
        let a = BatchKey { t: 1.0, class: CLASS_EDGE, seq: 1 };
        let b = BatchKey { t: 1.0, class: CLASS_LOCAL, seq: 9 };
        let c = BatchKey { t: 0.5, class: CLASS_EDGE, seq: 10 };
        let mut v = vec![a, b, c];
        v.sort();
        assert_eq!(v, vec![c, b, a]);
    }
}
