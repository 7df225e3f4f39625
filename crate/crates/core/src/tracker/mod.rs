//! Global-nearest-neighbour multi-object tracker.
//!
//! Constant-velocity Kalman filter per track with state
//! `[px, py, pz, vx, vy, vz]`, Mahalanobis gating on the position
//! innovation, Hungarian assignment on gated `d^2`, and an M-of-N
//! confirmation window. Updates use the Joseph form so covariances stay
//! symmetric PSD over long runs.

pub mod chi2;

use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{assign, Detection3D};
use crate::geometry::{serde_arrays, symmetrize, StateCov, StateVec, Vec3};

/// Reciprocal condition number below which an innovation covariance is
/// treated as singular.
pub const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("innovation covariance is singular (rcond {0:e})")]
    SingularInnovation(f64),
    #[error("track {0} is not confirmed")]
    NotConfirmed(u64),
    #[error("step time {t} precedes tracker time {last}")]
    TimeReversal { t: f64, last: f64 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Process-noise intensity of the white-acceleration model.
    pub q: f64,
    pub confirm_m: u32,
    pub confirm_n: u32,
    pub max_misses: u32,
    pub gate_prob: f64,
    /// Retention of the per-track snapshot history (seconds).
    pub snapshot_horizon: f64,
    /// Velocity standard deviation for newly spawned tracks.
    pub init_velocity_sigma: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            confirm_m: 3,
            confirm_n: 5,
            max_misses: 3,
            gate_prob: 0.99,
            snapshot_horizon: 1.0,
            init_velocity_sigma: 20.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("q > 0");
        }
        if !(1 <= self.confirm_m && self.confirm_m <= self.confirm_n && self.confirm_n <= 32) {
            return bad("1 <= confirm_m <= confirm_n <= 32");
        }
        if self.max_misses < 1 {
            return bad("max_misses >= 1");
        }
        if chi2::quantile(self.gate_prob, 3).is_none() {
            return bad("gate_prob in {0.95, 0.99}");
        }
        if !(self.snapshot_horizon >= 0.0) {
            return bad("snapshot_horizon >= 0");
        }
        if !(self.init_velocity_sigma > 0.0) {
            return bad("init_velocity_sigma > 0");
        }
        Ok(())
    }

    pub fn gate_threshold(&self) -> f64 {
        chi2::quantile(self.gate_prob, 3).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub timestamp: f64,
    #[serde(with = "serde_arrays::vector")]
    pub mean: StateVec,
    #[serde(with = "serde_arrays::matrix")]
    pub cov: StateCov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub mean: StateVec,
    pub cov: StateCov,
    pub status: TrackStatus,
    pub hits: u32,
    /// Consecutive misses.
    pub misses: u32,
    /// Hit/miss outcome of recent opportunities, newest in bit 0.
    pub window: u32,
    pub history: VecDeque<TrackSnapshot>,
    /// Time the mean refers to.
    pub time: f64,
    pub last_update: f64,
}

fn h() -> Matrix3x6<f64> {
    Matrix3x6::new(
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
    )
}

/// Constant-velocity transition over `dt`.
pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Discrete white-acceleration process noise.
pub fn process_noise(dt: f64, q: f64) -> Matrix6<f64> {
    let (a, b, c) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = a;
        m[(i, i + 3)] = b;
        m[(i + 3, i)] = b;
        m[(i + 3, i + 3)] = c;
    }
    m
}

/// Inverse of a symmetric 3x3 innovation covariance with a condition check.
fn invert_innovation(s: &Matrix3<f64>) -> Result<Matrix3<f64>, TrackerError> {
    let eig = SymmetricEigen::new(*s).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= RCOND_MIN) {
        return Err(TrackerError::SingularInnovation(rcond));
    }
    s.try_inverse().ok_or(TrackerError::SingularInnovation(rcond))
}

impl Track {
    pub fn new(id: u64, det: &Detection3D, cfg: &TrackerConfig) -> Self {
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&det.position);
        let mut cov = StateCov::zeros();
        cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&symmetrize(&det.cov));
        let vv = cfg.init_velocity_sigma.powi(2);
        for i in 3..6 {
            cov[(i, i)] = vv;
        }
        Self::from_estimate(id, mean, cov, det.timestamp)
    }

    /// Tentative track seeded from a full state estimate.
    pub fn from_estimate(id: u64, mean: StateVec, cov: StateCov, time: f64) -> Self {
        let mut t = Self {
            id,
            mean,
            cov,
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            window: 1,
            history: VecDeque::new(),
            time,
            last_update: time,
        };
        t.push_snapshot(f64::INFINITY);
        t
    }

    pub fn position(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_cov(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    fn push_snapshot(&mut self, horizon: f64) {
        self.history.push_back(TrackSnapshot {
            timestamp: self.time,
            mean: self.mean,
            cov: self.cov,
        });
        while let Some(front) = self.history.front() {
            if self.time - front.timestamp > horizon {
                self.history.pop_front();
            } else {
                break;
            }
        }
    }

    fn record_opportunity(&mut self, hit: bool, cfg: &TrackerConfig) {
        let mask = if cfg.confirm_n >= 32 {
            u32::MAX
        } else {
            (1u32 << cfg.confirm_n) - 1
        };
        self.window = ((self.window << 1) | hit as u32) & mask;
        if hit {
            self.misses = 0;
        } else {
            self.misses += 1;
        }
        self.check_confirmation(cfg);
    }

    fn check_confirmation(&mut self, cfg: &TrackerConfig) {
        if self.status == TrackStatus::Tentative && self.window.count_ones() >= cfg.confirm_m {
            self.status = TrackStatus::Confirmed;
        }
    }

    /// Turns the current step's outcome into a hit, for sightings that arrive
    /// after the local association (e.g. remote tracks). Idempotent per step.
    pub fn mark_sighting(&mut self, cfg: &TrackerConfig) {
        if self.window & 1 == 0 {
            self.window |= 1;
            self.hits += 1;
            self.misses = 0;
        }
        self.check_confirmation(cfg);
    }
}

pub fn predict(track: &Track, dt: f64, q: f64) -> Track {
    let mut out = track.clone();
    predict_in_place(&mut out, dt, q);
    out
}

pub fn predict_in_place(track: &mut Track, dt: f64, q: f64) {
    if dt == 0.0 {
        return;
    }
    let f = transition(dt);
    track.mean = f * track.mean;
    track.cov = symmetrize(&(f * track.cov * f.transpose() + process_noise(dt, q)));
    track.time += dt;
}

/// Innovation `z - H x` and its covariance `H P H^T + R`.
pub fn innovation(track: &Track, det: &Detection3D) -> (Vector3<f64>, Matrix3<f64>) {
    let nu = det.position - track.position();
    let s = symmetrize(&(track.position_cov() + det.cov));
    (nu, s)
}

pub fn gate(track: &Track, det: &Detection3D, gate_prob: f64) -> Result<(bool, f64), TrackerError> {
    let gamma = chi2::quantile(gate_prob, 3)
        .ok_or_else(|| TrackerError::InvalidArgument(format!("gate_prob {gate_prob} not tabulated")))?;
    let (nu, s) = innovation(track, det);
    let d2 = (nu.transpose() * invert_innovation(&s)? * nu)[(0, 0)];
    Ok((d2 <= gamma, d2))
}

/// Kalman update with a position measurement, Joseph-form covariance.
/// Does not touch lifecycle counters; see [`TrackerState::step`].
pub fn update(track: &Track, det: &Detection3D) -> Result<Track, TrackerError> {
    let (nu, s) = innovation(track, det);
    let s_inv = invert_innovation(&s)?;
    let hm = h();
    let k: Matrix6x3<f64> = track.cov * hm.transpose() * s_inv;
    let mut out = track.clone();
    out.mean = track.mean + k * nu;
    let ikh = Matrix6::identity() - k * hm;
    out.cov = symmetrize(&(ikh * track.cov * ikh.transpose() + k * det.cov * k.transpose()));
    out.last_update = track.time;
    Ok(out)
}

/// Constant-velocity waypoints at `time + k*dt`, `k = 1..=floor(horizon/dt)`.
pub fn predict_trajectory(track: &Track, horizon: f64, dt: f64) -> Result<Vec<(f64, Vec3)>, TrackerError> {
    if !track.is_confirmed() {
        return Err(TrackerError::NotConfirmed(track.id));
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(TrackerError::InvalidArgument("horizon > 0 and dt > 0".into()));
    }
    let count = (horizon / dt + 1e-9).floor() as usize;
    let (p, v) = (track.position(), track.velocity());
    Ok((1..=count)
        .map(|k| {
            let tau = k as f64 * dt;
            (track.time + tau, p + v * tau)
        })
        .collect())
}

/// Per-frame dump row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u64,
    pub status: TrackStatus,
    #[serde(with = "serde_arrays::vector")]
    pub mean: StateVec,
    #[serde(with = "serde_arrays::vector")]
    pub cov_diag: StateVec,
    pub timestamp: f64,
}

impl From<&Track> for TrackRecord {
    fn from(t: &Track) -> Self {
        Self {
            id: t.id,
            status: t.status,
            mean: t.mean,
            cov_diag: t.cov.diagonal(),
            timestamp: t.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub config: TrackerConfig,
    /// Live tracks in creation order.
    pub tracks: Vec<Track>,
    pub next_id: u64,
    pub time: Option<f64>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            time: None,
        })
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_confirmed())
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }

    /// Predicts every track to `t` and advances the tracker clock.
    pub fn predict_to(&mut self, t: f64) -> Result<(), TrackerError> {
        if let Some(last) = self.time {
            if t < last {
                return Err(TrackerError::TimeReversal { t, last });
            }
        }
        let q = self.config.q;
        for tr in &mut self.tracks {
            predict_in_place(tr, t - tr.time, q);
        }
        self.time = Some(t);
        Ok(())
    }

    pub fn spawn(&mut self, mean: StateVec, cov: StateCov, t: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let mut tr = Track::from_estimate(id, mean, cov, t);
        tr.history.clear();
        tr.push_snapshot(self.config.snapshot_horizon);
        self.tracks.push(tr);
        id
    }

    /// One tracking cycle: predict, gate, assign, update, manage lifecycle.
    pub fn step(&mut self, detections: &[Detection3D], t: f64) -> Result<(), TrackerError> {
        self.predict_to(t)?;
        let cfg = self.config;
        let gamma = cfg.gate_threshold();
        let mut cost = nalgebra::DMatrix::from_element(self.tracks.len(), detections.len(), f64::INFINITY);
        for (i, tr) in self.tracks.iter().enumerate() {
            for (j, det) in detections.iter().enumerate() {
                let (nu, s) = innovation(tr, det);
                if let Ok(s_inv) = invert_innovation(&s) {
                    let d2 = (nu.transpose() * s_inv * nu)[(0, 0)];
                    if d2 <= gamma {
                        cost[(i, j)] = d2;
                    }
                }
            }
        }
        let pairs = assign(&cost);
        let mut det_used = vec![false; detections.len()];
        let mut track_hit = vec![false; self.tracks.len()];
        for &(i, j) in &pairs {
            let updated = update(&self.tracks[i], &detections[j])?;
            let tr = &mut self.tracks[i];
            tr.mean = updated.mean;
            tr.cov = updated.cov;
            tr.last_update = updated.last_update;
            tr.hits += 1;
            tr.push_snapshot(cfg.snapshot_horizon);
            det_used[j] = true;
            track_hit[i] = true;
        }
        for (tr, hit) in self.tracks.iter_mut().zip(&track_hit) {
            tr.record_opportunity(*hit, &cfg);
            if tr.misses > cfg.max_misses {
                tr.status = TrackStatus::Deleted;
            }
        }
        self.tracks.retain(|tr| tr.status != TrackStatus::Deleted);
        for (det, used) in detections.iter().zip(det_used) {
            if !used {
                let id = self.next_id;
                self.next_id += 1;
                let mut tr = Track::new(id, det, &cfg);
                tr.time = t;
                tr.last_update = t;
                tr.history.clear();
                tr.push_snapshot(cfg.snapshot_horizon);
                self.tracks.push(tr);
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<TrackRecord> {
        self.tracks.iter().map(TrackRecord::from).collect()
    }
}
