//! Detection, tracking (CLEAR MOT, OSPA) and prediction (ADE/FDE) scores.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collab::CollabCounters;
use crate::fusion::assign;
use crate::geometry::Vec3;
use crate::offload::OffloadCounters;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("waypoint time {t} outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
    #[error("no waypoints")]
    Empty,
    #[error("invalid metrics config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub match_radius: f64,
    pub ospa_c: f64,
    pub ospa_p: f64,
    pub prediction_horizon: f64,
    pub prediction_step: f64,
    /// Only objects and tracks within this distance of the ego are scored.
    pub eval_range: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            match_radius: 2.0,
            ospa_c: 5.0,
            ospa_p: 1.0,
            prediction_horizon: 2.0,
            prediction_step: 0.5,
            eval_range: 80.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.match_radius > 0.0 && self.match_radius.is_finite()) {
            return Err(MetricsError::InvalidConfig("match_radius > 0".into()));
        }
        if !(self.ospa_c > 0.0 && self.ospa_p >= 1.0) {
            return Err(MetricsError::InvalidConfig("ospa_c > 0 and ospa_p >= 1".into()));
        }
        if !(self.prediction_horizon > 0.0 && self.prediction_step > 0.0) {
            return Err(MetricsError::InvalidConfig("prediction horizon and step > 0".into()));
        }
        if !(self.eval_range > 0.0) {
            return Err(MetricsError::InvalidConfig("eval_range > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMatchResult {
    pub t: f64,
    /// (gt id, estimate id, distance)
    pub matches: Vec<(u64, u64, f64)>,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl FrameMatchResult {
    pub fn gt_count(&self) -> u64 {
        self.matches.len() as u64 + self.fn_
    }

    /// gt id -> estimate id, the carry-over input for the next frame.
    pub fn assignment(&self) -> BTreeMap<u64, u64> {
        self.matches.iter().map(|&(g, e, _)| (g, e)).collect()
    }
}

/// CLEAR matching by Euclidean distance with a gating radius. Pairs kept
/// from `previous` (gt id -> estimate id) win if still within the radius;
/// the rest are solved optimally.
pub fn match_frame(
    t: f64,
    gt: &[(u64, Vec3)],
    est: &[(u64, Vec3)],
    radius: f64,
    previous: &BTreeMap<u64, u64>,
) -> FrameMatchResult {
    let mut gt_used = vec![false; gt.len()];
    let mut est_used = vec![false; est.len()];
    let mut matches = Vec::new();
    for (i, (gid, gp)) in gt.iter().enumerate() {
        let Some(eid) = previous.get(gid) else {
            continue;
        };
        if let Some(j) = est.iter().position(|(id, _)| id == eid) {
            let d = (est[j].1 - gp).norm();
            if !est_used[j] && d <= radius {
                gt_used[i] = true;
                est_used[j] = true;
                matches.push((*gid, *eid, d));
            }
        }
    }
    let gi: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let ej: Vec<usize> = (0..est.len()).filter(|&j| !est_used[j]).collect();
    let cost = DMatrix::from_fn(gi.len(), ej.len(), |r, c| {
        let d = (est[ej[c]].1 - gt[gi[r]].1).norm();
        if d <= radius {
            d
        } else {
            f64::INFINITY
        }
    });
    for (r, c) in assign(&cost) {
        matches.push((gt[gi[r]].0, est[ej[c]].0, cost[(r, c)]));
    }
    matches.sort_by_key(|m| m.0);
    FrameMatchResult {
        t,
        fp: (est.len() - matches.len()) as u64,
        fn_: (gt.len() - matches.len()) as u64,
        matches,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearMot {
    pub mota: Option<f64>,
    pub motp: Option<f64>,
    pub id_switches: u64,
}

/// `None` when there is no ground truth at all.
pub fn mota_from_counts(gt: u64, fp: u64, fn_: u64, idsw: u64) -> Option<f64> {
    if gt == 0 {
        None
    } else {
        Some(1.0 - (fn_ + fp + idsw) as f64 / gt as f64)
    }
}

pub fn count_id_switches(frames: &[FrameMatchResult]) -> u64 {
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    let mut idsw = 0;
    for f in frames {
        for &(g, e, _) in &f.matches {
            if let Some(prev) = last.insert(g, e) {
                if prev != e {
                    idsw += 1;
                }
            }
        }
    }
    idsw
}

pub fn clear_mot(frames: &[FrameMatchResult]) -> ClearMot {
    let gt: u64 = frames.iter().map(FrameMatchResult::gt_count).sum();
    let fp: u64 = frames.iter().map(|f| f.fp).sum();
    let fn_: u64 = frames.iter().map(|f| f.fn_).sum();
    let idsw = count_id_switches(frames);
    let (dsum, n) = frames
        .iter()
        .flat_map(|f| f.matches.iter())
        .fold((0.0, 0u64), |(s, n), m| (s + m.2, n + 1));
    ClearMot {
        mota: mota_from_counts(gt, fp, fn_, idsw),
        motp: (n > 0).then(|| dsum / n as f64),
        id_switches: idsw,
    }
}

/// Optimal sub-pattern assignment distance with cutoff `c` and order `p`.
pub fn ospa(a: &[Vec3], b: &[Vec3], c: f64, p: f64) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let cost = DMatrix::from_fn(m, n, |i, j| (small[i] - large[j]).norm().min(c).powf(p));
    let mut matched: Vec<f64> = assign(&cost).iter().map(|&(i, j)| cost[(i, j)]).collect();
    matched.sort_by(f64::total_cmp);
    let total: f64 = matched.iter().sum();
    let v = ((total + c.powf(p) * (n - m) as f64) / n as f64).powf(1.0 / p);
    v.min(c)
}

/// Average and final displacement error of a predicted trajectory against
/// `truth`, which must cover every waypoint time.
pub fn prediction_error(
    predicted: &[(f64, Vec3)],
    truth: impl Fn(f64) -> Option<Vec3>,
    duration: f64,
) -> Result<(f64, f64), MetricsError> {
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut errs = Vec::with_capacity(predicted.len());
    for &(t, p) in predicted {
        if !(0.0..=duration).contains(&t) {
            return Err(MetricsError::OutOfRange { t, duration });
        }
        let g = truth(t).ok_or(MetricsError::OutOfRange { t, duration })?;
        errs.push((p - g).norm());
    }
    let ade = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((ade, *errs.last().expect("non-empty")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaSample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: u64,
    pub gt_total: u64,
    pub matches_total: u64,
    pub fp_total: u64,
    pub fn_total: u64,
    /// Confirmed-track precision and recall at the match radius.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mota: Option<f64>,
    pub motp: Option<f64>,
    pub id_switches: u64,
    /// Same scores on the fused per-frame detections.
    pub det_precision: Option<f64>,
    pub det_recall: Option<f64>,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub predictions: u64,
    pub ospa_mean: Option<f64>,
    pub ospa: Vec<OspaSample>,
    pub collab: Option<CollabCounters>,
    pub offload: Option<OffloadCounters>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Collects per-frame scores during a run.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    pub config: MetricsConfig,
    pub frames: Vec<FrameMatchResult>,
    pub ospa: Vec<OspaSample>,
    det_matches: u64,
    det_fp: u64,
    det_fn: u64,
    ade_sum: f64,
    fde_sum: f64,
    predictions: u64,
}

impl MetricsAccumulator {
    pub fn new(config: MetricsConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn add_tracks(&mut self, t: f64, gt: &[(u64, Vec3)], tracks: &[(u64, Vec3)]) -> &FrameMatchResult {
        let prev = self.frames.last().map(FrameMatchResult::assignment).unwrap_or_default();
        let f = match_frame(t, gt, tracks, self.config.match_radius, &prev);
        let a: Vec<Vec3> = gt.iter().map(|g| g.1).collect();
        let b: Vec<Vec3> = tracks.iter().map(|e| e.1).collect();
        self.ospa.push(OspaSample {
            t,
            value: ospa(&a, &b, self.config.ospa_c, self.config.ospa_p),
        });
        self.frames.push(f);
        self.frames.last().expect("just pushed")
    }

    pub fn add_detections(&mut self, t: f64, gt: &[(u64, Vec3)], detections: &[Vec3]) {
        let est: Vec<(u64, Vec3)> = detections.iter().enumerate().map(|(i, p)| (i as u64, *p)).collect();
        let f = match_frame(t, gt, &est, self.config.match_radius, &BTreeMap::new());
        self.det_matches += f.matches.len() as u64;
        self.det_fp += f.fp;
        self.det_fn += f.fn_;
    }

    pub fn add_prediction(&mut self, ade: f64, fde: f64) {
        self.ade_sum += ade;
        self.fde_sum += fde;
        self.predictions += 1;
    }

    pub fn report(&self, collab: Option<CollabCounters>, offload: Option<OffloadCounters>) -> MetricsReport {
        let mot = clear_mot(&self.frames);
        let matches: u64 = self.frames.iter().map(|f| f.matches.len() as u64).sum();
        let fp: u64 = self.frames.iter().map(|f| f.fp).sum();
        let fn_: u64 = self.frames.iter().map(|f| f.fn_).sum();
        let n_ospa = self.ospa.len();
        MetricsReport {
            frames: self.frames.len() as u64,
            gt_total: matches + fn_,
            matches_total: matches,
            fp_total: fp,
            fn_total: fn_,
            precision: ratio(matches, matches + fp),
            recall: ratio(matches, matches + fn_),
            mota: mot.mota,
            motp: mot.motp,
            id_switches: mot.id_switches,
            det_precision: ratio(self.det_matches, self.det_matches + self.det_fp),
            det_recall: ratio(self.det_matches, self.det_matches + self.det_fn),
            ade: (self.predictions > 0).then(|| self.ade_sum / self.predictions as f64),
            fde: (self.predictions > 0).then(|| self.fde_sum / self.predictions as f64),
            predictions: self.predictions,
            ospa_mean: (n_ospa > 0).then(|| self.ospa.iter().map(|s| s.value).sum::<f64>() / n_ospa as f64),
            ospa: self.ospa.clone(),
            collab,
            offload,
        }
    }
}

pub const CSV_HEADER: &str =
    "scenario,mode,seed,frames,precision,recall,mota,motp,id_switches,det_precision,det_recall,ade,fde,ospa_mean";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line (no trailing newline); undefined values are empty cells.
pub fn csv_row(scenario: &str, mode: &str, seed: u64, m: &MetricsReport) -> String {
    [
        scenario.to_string(),
        mode.to_string(),
        seed.to_string(),
        m.frames.to_string(),
        opt(m.precision),
        opt(m.recall),
        opt(m.mota),
        opt(m.motp),
        m.id_switches.to_string(),
        opt(m.det_precision),
        opt(m.det_recall),
        opt(m.ade),
        opt(m.fde),
        opt(m.ospa_mean),
    ]
    .join(",")
}
