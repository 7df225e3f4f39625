//! Collaborative track fusion for remote V2V / V2I track messages.
//!
//! Remote tracks are extrapolated to the local time, moved into the local
//! tracking frame, associated with local tracks on their position blocks and
//! fused by covariance intersection, which stays consistent when the
//! cross-correlation between platforms is unknown.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::assign;
use crate::geometry::{serde_arrays, transform_gaussian, GeometryError, Pose, PoseRecord, StateCov, StateVec};
use crate::tracker::{chi2, predict_in_place, Track, TrackerState};

pub const RCOND_MIN: f64 = 1e-12;
pub const OMEGA_TOL: f64 = 1e-4;
pub const OMEGA_GRID: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollabError {
    #[error("message is {age:.3} s old, bound is {bound} s")]
    StaleMessage { age: f64, bound: f64 },
    #[error("message timestamp {timestamp} is after receive time {now}")]
    FromFuture { timestamp: f64, now: f64 },
    #[error("matrix not invertible (rcond {0:e})")]
    NonInvertible(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollabConfig {
    /// Messages older than this at processing time are discarded.
    pub staleness: f64,
    /// Rate at which collaborators publish their confirmed tracks.
    pub broadcast_rate: f64,
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            staleness: 1.0,
            broadcast_rate: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteTrack {
    pub remote_id: u64,
    #[serde(with = "serde_arrays::vector")]
    pub mean: StateVec,
    #[serde(with = "serde_arrays::matrix")]
    pub cov: StateCov,
}

/// Track list published by a collaborator, expressed in its own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteTrackMsg {
    pub sender_id: String,
    /// world-from-sender
    pub sender_pose: PoseRecord,
    pub timestamp: f64,
    pub tracks: Vec<RemoteTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTrack {
    pub remote_id: u64,
    pub mean: StateVec,
    pub cov: StateCov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedTrackLink {
    pub local_id: u64,
    pub sender_id: String,
    pub remote_id: u64,
    pub last_fusion: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollabCounters {
    pub messages_received: u64,
    pub messages_stale: u64,
    pub tracks_fused: u64,
    pub tracks_spawned: u64,
    pub errors: u64,
}

/// Extrapolates each remote track to `t_now` in the sender frame, then maps
/// it into the frame whose world pose is `ego_pose`.
pub fn align(
    msg: &RemoteTrackMsg,
    ego_pose: &Pose,
    t_now: f64,
    q: f64,
    staleness: f64,
) -> Result<Vec<AlignedTrack>, CollabError> {
    let age = t_now - msg.timestamp;
    if age < 0.0 {
        return Err(CollabError::FromFuture {
            timestamp: msg.timestamp,
            now: t_now,
        });
    }
    if age > staleness {
        return Err(CollabError::StaleMessage { age, bound: staleness });
    }
    let ego_from_sender = ego_pose.inverse().compose(&Pose::from(msg.sender_pose));
    msg.tracks
        .iter()
        .map(|rt| {
            let mut tr = Track::from_estimate(rt.remote_id, rt.mean, rt.cov, msg.timestamp);
            predict_in_place(&mut tr, age, q);
            let (mean, cov) = transform_gaussian(&ego_from_sender, &tr.mean, &tr.cov)?;
            Ok(AlignedTrack {
                remote_id: rt.remote_id,
                mean,
                cov,
            })
        })
        .collect()
}

fn pos_block(c: &StateCov) -> Matrix3<f64> {
    c.fixed_view::<3, 3>(0, 0).into_owned()
}

/// Position-block Mahalanobis cost matrix, gated at the 0.99 / 3 dof quantile.
pub fn t2t_cost(local: &[Track], remote: &[AlignedTrack]) -> DMatrix<f64> {
    let gamma = chi2::quantile(0.99, 3).expect("tabulated");
    let mut cost = DMatrix::from_element(local.len(), remote.len(), f64::INFINITY);
    for (i, l) in local.iter().enumerate() {
        for (j, r) in remote.iter().enumerate() {
            let delta = l.position() - r.mean.fixed_rows::<3>(0);
            let s = pos_block(&l.cov) + pos_block(&r.cov);
            if let Some(s_inv) = s.try_inverse() {
                let d2 = (delta.transpose() * s_inv * delta)[(0, 0)];
                if d2 <= gamma {
                    cost[(i, j)] = d2;
                }
            }
        }
    }
    cost
}

/// (local index, remote index) pairs.
pub fn t2t_associate(local: &[Track], remote: &[AlignedTrack]) -> Vec<(usize, usize)> {
    assign(&t2t_cost(local, remote))
}

fn spd_inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>, CollabError> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= RCOND_MIN) {
        return Err(CollabError::NonInvertible(rcond));
    }
    sym.try_inverse().ok_or(CollabError::NonInvertible(rcond))
}

fn ci_trace(ia: &DMatrix<f64>, ib: &DMatrix<f64>, omega: f64) -> f64 {
    let info = ia * omega + ib * (1.0 - omega);
    match info.cholesky() {
        Some(ch) => ch.inverse().trace(),
        None => f64::INFINITY,
    }
}

/// Weight minimizing the trace of the CI covariance.
///
/// A 101-point grid picks the bracket around the best grid point, golden
/// section refines it to `OMEGA_TOL`, and the bracket endpoints stay
/// candidates so boundary optima come back exactly as 0 or 1. A flat
/// objective (e.g. `Pa == Pb`) returns 0.5.
pub fn ci_omega(pa: &DMatrix<f64>, pb: &DMatrix<f64>) -> Result<f64, CollabError> {
    let ia = spd_inverse(pa)?;
    let ib = spd_inverse(pb)?;
    let f = |w: f64| ci_trace(&ia, &ib, w);
    let step = 1.0 / (OMEGA_GRID - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..OMEGA_GRID)
        .map(|k| {
            let w = k as f64 * step;
            (w, f(w))
        })
        .collect();
    let (lo_val, hi_val) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    if hi_val - lo_val <= 1e-12 * lo_val.abs().max(1e-300) {
        return Ok(0.5);
    }
    let best_k = grid
        .iter()
        .enumerate()
        .fold(0, |best, (k, &(_, v))| if v < grid[best].1 { k } else { best });
    let mut a = grid[best_k.saturating_sub(1)].0;
    let mut b = grid[(best_k + 1).min(OMEGA_GRID - 1)].0;
    let (lo_end, hi_end) = (a, b);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > OMEGA_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(mid, f(mid)), (lo_end, f(lo_end)), (hi_end, f(hi_end))];
    let best = candidates
        .iter()
        .fold(candidates[0], |best, &c| if c.1 < best.1 { c } else { best });
    Ok(best.0)
}

/// Covariance intersection of two estimates with weight `omega` on `a`.
pub fn ci_fuse(
    xa: &DVector<f64>,
    pa: &DMatrix<f64>,
    xb: &DVector<f64>,
    pb: &DMatrix<f64>,
    omega: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), CollabError> {
    if (xa == xb && pa == pb) || omega == 1.0 {
        spd_inverse(pa)?;
        return Ok((xa.clone(), pa.clone()));
    }
    if omega == 0.0 {
        spd_inverse(pb)?;
        return Ok((xb.clone(), pb.clone()));
    }
    let ia = spd_inverse(pa)?;
    let ib = spd_inverse(pb)?;
    let info = &ia * omega + &ib * (1.0 - omega);
    let p = spd_inverse(&info)?;
    let x = &p * (&ia * xa * omega + &ib * xb * (1.0 - omega));
    let p = (&p + p.transpose()) * 0.5;
    Ok((x, p))
}

fn to_dyn(mean: &StateVec, cov: &StateCov) -> (DVector<f64>, DMatrix<f64>) {
    (
        DVector::from_column_slice(mean.as_slice()),
        DMatrix::from_column_slice(6, 6, cov.as_slice()),
    )
}

/// Fusion-module state held by the receiving agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollabState {
    pub config: CollabConfig,
    pub links: BTreeMap<(String, u64), FusedTrackLink>,
    pub counters: CollabCounters,
}

impl CollabState {
    pub fn new(config: CollabConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    /// Fuses remote track messages into a tracker already predicted to
    /// `t_now`. Per-message failures are returned as log lines, never fatal.
    pub fn covi_step(
        &mut self,
        tracker: &mut TrackerState,
        msgs: &[RemoteTrackMsg],
        ego_pose: &Pose,
        t_now: f64,
    ) -> Vec<String> {
        let mut log = Vec::new();
        for msg in msgs {
            self.counters.messages_received += 1;
            if let Err(e) = self.apply_message(tracker, msg, ego_pose, t_now) {
                match e {
                    CollabError::StaleMessage { .. } => self.counters.messages_stale += 1,
                    _ => self.counters.errors += 1,
                }
                log.push(format!("message from {} at {}: {e}", msg.sender_id, msg.timestamp));
            }
        }
        let live: Vec<u64> = tracker.tracks.iter().map(|t| t.id).collect();
        self.links.retain(|_, l| live.binary_search(&l.local_id).is_ok());
        log
    }

    fn apply_message(
        &mut self,
        tracker: &mut TrackerState,
        msg: &RemoteTrackMsg,
        ego_pose: &Pose,
        t_now: f64,
    ) -> Result<(), CollabError> {
        let aligned = align(msg, ego_pose, t_now, tracker.config.q, self.config.staleness)?;
        let pairs = t2t_associate(&tracker.tracks, &aligned);
        let mut matched = vec![false; aligned.len()];
        let cfg = tracker.config;
        for &(i, j) in &pairs {
            let local = &tracker.tracks[i];
            let (xa, pa) = to_dyn(&local.mean, &local.cov);
            let (xb, pb) = to_dyn(&aligned[j].mean, &aligned[j].cov);
            let omega = ci_omega(&pa, &pb)?;
            let (x, p) = ci_fuse(&xa, &pa, &xb, &pb, omega)?;
            let tr = &mut tracker.tracks[i];
            tr.mean = StateVec::from_column_slice(x.as_slice());
            tr.cov = StateCov::from_column_slice(p.as_slice());
            tr.mark_sighting(&cfg);
            matched[j] = true;
            self.counters.tracks_fused += 1;
            self.link(tr.id, &msg.sender_id, aligned[j].remote_id, t_now);
        }
        for (a, m) in aligned.iter().zip(matched) {
            if !m {
                let id = tracker.spawn(a.mean, a.cov, t_now);
                self.counters.tracks_spawned += 1;
                self.link(id, &msg.sender_id, a.remote_id, t_now);
            }
        }
        Ok(())
    }

    fn link(&mut self, local_id: u64, sender: &str, remote_id: u64, t: f64) {
        self.links.insert(
            (sender.to_string(), remote_id),
            FusedTrackLink {
                local_id,
                sender_id: sender.to_string(),
                remote_id,
                last_fusion: t,
            },
        );
    }
}
