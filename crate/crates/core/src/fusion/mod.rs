//! Local camera-radar fusion.
//!
//! Radar points are projected into the image and paired with the 2D boxes
//! that contain them; each pair becomes a 3D detection at the radar point
//! with a polar measurement covariance. Leftover radar points pass through
//! as low-score radar-only detections; leftover boxes carry no depth and are
//! discarded.

pub mod assign;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use assign::{assign, assignment_cost};

use crate::geometry::{project_to_image, serde_arrays, CameraIntrinsics, Mat3, Pose, Vec3};
use crate::sensing::{to_polar, Detection2D, RadarPoint, SensorNoiseConfig};

/// Normalized pixel-distance gate for box/point pairs.
pub const PIXEL_GATE: f64 = 0.5;
pub const RADAR_ONLY_SCORE: f64 = 0.3;
/// Radar-only detections are down-weighted by this covariance factor.
pub const RADAR_ONLY_COV_SCALE: f64 = 4.0;
/// Floor on each measurement-covariance axis (m^2).
pub const MIN_MEASUREMENT_VAR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionSource {
    #[serde(rename = "camera+radar")]
    CameraRadar,
    RadarOnly,
    /// Produced by an offloaded (edge) perception task.
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection3D {
    #[serde(with = "serde_arrays::vector")]
    pub position: Vec3,
    pub radial_speed: f64,
    #[serde(with = "serde_arrays::matrix")]
    pub cov: Mat3,
    pub source: DetectionSource,
    pub score: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// (box index, radar index)
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_bboxes: Vec<usize>,
    pub unmatched_radar: Vec<usize>,
}

/// Pairs radar points with the boxes they project into.
pub fn frustum_associate(
    bboxes: &[Detection2D],
    points: &[RadarPoint],
    k: &CameraIntrinsics,
    cam_from_radar: &Pose,
) -> Association {
    let mut cost = DMatrix::from_element(bboxes.len(), points.len(), f64::INFINITY);
    for (j, pt) in points.iter().enumerate() {
        let Ok(px) = project_to_image(k, &cam_from_radar.transform_point(&pt.position)) else {
            continue;
        };
        for (i, det) in bboxes.iter().enumerate() {
            let b = &det.bbox;
            if !b.contains_strict(px.u, px.v) {
                continue;
            }
            let (cu, cv) = b.center();
            let c = (px.u - cu).hypot(px.v - cv) / b.diagonal();
            if c <= PIXEL_GATE {
                cost[(i, j)] = c;
            }
        }
    }
    let pairs = assign(&cost);
    let mut box_used = vec![false; bboxes.len()];
    let mut pt_used = vec![false; points.len()];
    for &(i, j) in &pairs {
        box_used[i] = true;
        pt_used[j] = true;
    }
    Association {
        pairs,
        unmatched_bboxes: (0..bboxes.len()).filter(|&i| !box_used[i]).collect(),
        unmatched_radar: (0..points.len()).filter(|&j| !pt_used[j]).collect(),
    }
}

/// Position covariance of a radar return: range noise along the line of
/// sight, `range * azimuth_sigma` across it in azimuth and elevation,
/// rotated into the target frame.
pub fn polar_covariance(p_sensor: &Vec3, range_sigma: f64, azimuth_sigma: f64, target_from_sensor: &Pose) -> Mat3 {
    let (range, az, el) = to_polar(p_sensor);
    let cov_sensor = if range > 0.0 {
        let (sa, ca) = az.sin_cos();
        let (se, ce) = el.sin_cos();
        let e_r = Vec3::new(ce * ca, ce * sa, se);
        let e_az = Vec3::new(-sa, ca, 0.0);
        let e_el = Vec3::new(-se * ca, -se * sa, ce);
        let tangential = (range * azimuth_sigma).powi(2);
        e_r * e_r.transpose() * range_sigma.powi(2)
            + e_az * e_az.transpose() * tangential
            + e_el * e_el.transpose() * tangential
    } else {
        Mat3::identity() * range_sigma.powi(2)
    };
    let r = target_from_sensor.rotation;
    let mut cov = r * cov_sensor * r.transpose();
    cov = (cov + cov.transpose()) * 0.5;
    for i in 0..3 {
        cov[(i, i)] += MIN_MEASUREMENT_VAR;
    }
    cov
}

/// Builds 3D detections in the frame of `target_from_radar`, ordered by
/// radar index.
pub fn synthesize(
    assoc: &Association,
    bboxes: &[Detection2D],
    points: &[RadarPoint],
    target_from_radar: &Pose,
    radar_noise: &SensorNoiseConfig,
) -> Vec<Detection3D> {
    let mut paired_box = vec![None; points.len()];
    for &(i, j) in &assoc.pairs {
        paired_box[j] = Some(i);
    }
    points
        .iter()
        .enumerate()
        .map(|(j, pt)| {
            let cov = polar_covariance(
                &pt.position,
                radar_noise.range_sigma,
                radar_noise.azimuth_sigma,
                target_from_radar,
            );
            let position = target_from_radar.transform_point(&pt.position);
            match paired_box[j] {
                Some(i) => Detection3D {
                    position,
                    radial_speed: pt.radial_speed,
                    cov,
                    source: DetectionSource::CameraRadar,
                    score: bboxes[i].score,
                    timestamp: pt.timestamp,
                },
                None => Detection3D {
                    position,
                    radial_speed: pt.radial_speed,
                    cov: cov * RADAR_ONLY_COV_SCALE,
                    source: DetectionSource::RadarOnly,
                    score: RADAR_ONLY_SCORE,
                    timestamp: pt.timestamp,
                },
            }
        })
        .collect()
}
