//! Synthetic camera and radar models.
//!
//! The camera yields 2D boxes from projected object corners with edge noise,
//! misses, box-overlap occlusion and uniform clutter. The radar yields one
//! polar-perturbed point per object inside its field of view plus clutter and
//! sees through occluders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{project_to_image, serde_arrays, CameraIntrinsics, Pose, Vec3, MIN_DEPTH};
use crate::rng::{bernoulli, gauss, poisson, uniform};

/// Fraction of a box that a nearer box must cover to hide it from a camera.
pub const OCCLUSION_COVERAGE: f64 = 0.85;
pub const CLUTTER_BOX_MIN: f64 = 20.0;
pub const CLUTTER_BOX_MAX: f64 = 120.0;
pub const TRUE_DETECTION_SCORE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObject {
    pub id: u64,
    #[serde(with = "serde_arrays::vector")]
    pub position: Vec3,
    #[serde(with = "serde_arrays::vector")]
    pub velocity: Vec3,
    /// Full box dimensions (length along world x, width along y, height).
    #[serde(with = "serde_arrays::vector")]
    pub extent: Vec3,
}

impl GroundTruthObject {
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.extent * 0.5;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.position + Vec3::new(sx * h.x, sy * h.y, sz * h.z);
        }
        out
    }
}

/// Axis-aligned pixel box `[umin, vmin, umax, vmax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub umin: f64,
    pub vmin: f64,
    pub umax: f64,
    pub vmax: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        Self {
            umin: a[0],
            vmin: a[1],
            umax: a[2],
            vmax: a[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.umin, b.vmin, b.umax, b.vmax]
    }
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        self.umin < self.umax && self.vmin < self.vmax
    }

    pub fn area(&self) -> f64 {
        if self.is_valid() {
            (self.umax - self.umin) * (self.vmax - self.vmin)
        } else {
            0.0
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        BBox {
            umin: self.umin.max(other.umin),
            vmin: self.vmin.max(other.vmin),
            umax: self.umax.min(other.umax),
            vmax: self.vmax.min(other.vmax),
        }
        .area()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.umin + self.umax), 0.5 * (self.vmin + self.vmax))
    }

    pub fn diagonal(&self) -> f64 {
        (self.umax - self.umin).hypot(self.vmax - self.vmin)
    }

    /// Strict interior test.
    pub fn contains_strict(&self, u: f64, v: f64) -> bool {
        u > self.umin && u < self.umax && v > self.vmin && v < self.vmax
    }

    fn clip(&self, k: &CameraIntrinsics) -> BBox {
        BBox {
            umin: self.umin.clamp(0.0, k.width),
            vmin: self.vmin.clamp(0.0, k.height),
            umax: self.umax.clamp(0.0, k.width),
            vmax: self.vmax.clamp(0.0, k.height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection2D {
    pub bbox: BBox,
    pub score: f64,
    pub sensor_id: String,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarPoint {
    /// Sensor frame (x forward, y left, z up).
    #[serde(with = "serde_arrays::vector")]
    pub position: Vec3,
    pub radial_speed: f64,
    pub snr: f64,
    pub sensor_id: String,
    pub timestamp: f64,
}

impl RadarPoint {
    pub fn range(&self) -> f64 {
        self.position.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoiseConfig {
    pub pixel_sigma: f64,
    pub range_sigma: f64,
    pub azimuth_sigma: f64,
    pub speed_sigma: f64,
    pub p_detect: f64,
    /// Poisson mean of false alarms per frame.
    pub clutter_rate: f64,
    /// Full horizontal field of view.
    pub fov_azimuth: f64,
    pub max_range: f64,
}

impl SensorNoiseConfig {
    /// Perfect sensor: no noise, no misses, no clutter, wide field of view.
    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            range_sigma: 0.0,
            azimuth_sigma: 0.0,
            speed_sigma: 0.0,
            p_detect: 1.0,
            clutter_rate: 0.0,
            fov_azimuth: std::f64::consts::TAU,
            max_range: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            self.pixel_sigma,
            self.range_sigma,
            self.azimuth_sigma,
            self.speed_sigma,
        ];
        if !sigmas.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err("all sigmas >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.p_detect) {
            return Err("0 <= p_detect <= 1".into());
        }
        if !(self.clutter_rate.is_finite() && self.clutter_rate >= 0.0) {
            return Err("clutter_rate >= 0".into());
        }
        if !(self.fov_azimuth > 0.0 && self.max_range > 0.0) {
            return Err("fov_azimuth > 0 and max_range > 0".into());
        }
        Ok(())
    }
}

/// Named device defaults. The numbers are plausible placeholders, not
/// measured characteristics of the devices they are named after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    BlackflyS,
    Iwr1443,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "blackfly-s" => Some(Preset::BlackflyS),
            "iwr1443" => Some(Preset::Iwr1443),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::BlackflyS => "blackfly-s",
            Preset::Iwr1443 => "iwr1443",
        }
    }

    pub fn rate_hz(self) -> f64 {
        match self {
            Preset::BlackflyS => 10.0,
            Preset::Iwr1443 => 20.0,
        }
    }

    pub fn noise(self) -> SensorNoiseConfig {
        match self {
            Preset::BlackflyS => SensorNoiseConfig {
                pixel_sigma: 2.0,
                range_sigma: 0.0,
                azimuth_sigma: 0.0,
                speed_sigma: 0.0,
                p_detect: 0.95,
                clutter_rate: 0.1,
                fov_azimuth: 2.0 * (960.0f64 / 1000.0).atan(),
                max_range: 120.0,
            },
            Preset::Iwr1443 => SensorNoiseConfig {
                pixel_sigma: 0.0,
                range_sigma: 0.15,
                azimuth_sigma: 0.02,
                speed_sigma: 0.1,
                p_detect: 0.9,
                clutter_rate: 0.2,
                fov_azimuth: 120f64.to_radians(),
                max_range: 80.0,
            },
        }
    }

    pub fn intrinsics(self) -> Option<CameraIntrinsics> {
        match self {
            Preset::BlackflyS => Some(CameraIntrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 960.0,
                cy: 540.0,
                width: 1920.0,
                height: 1080.0,
            }),
            Preset::Iwr1443 => None,
        }
    }
}

/// Noise-free box of one object as seen by the camera, with its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleBox {
    pub object_id: u64,
    pub bbox: BBox,
    pub depth: f64,
}

/// Objects whose center projects inside the image, with their clipped corner
/// hulls, after removing occluded ones. Order follows `objects`.
pub fn visible_boxes(
    k: &CameraIntrinsics,
    world_from_camera: &Pose,
    objects: &[GroundTruthObject],
    max_range: f64,
) -> Vec<VisibleBox> {
    let camera_from_world = world_from_camera.inverse();
    let mut boxes = Vec::new();
    for obj in objects {
        let center = camera_from_world.transform_point(&obj.position);
        if center.z > max_range {
            continue;
        }
        let Ok(c) = project_to_image(k, &center) else {
            continue;
        };
        if !k.contains(&c) {
            continue;
        }
        let mut hull = BBox {
            umin: f64::INFINITY,
            vmin: f64::INFINITY,
            umax: f64::NEG_INFINITY,
            vmax: f64::NEG_INFINITY,
        };
        for corner in obj.corners() {
            let pc = camera_from_world.transform_point(&corner);
            if pc.z <= MIN_DEPTH {
                continue;
            }
            if let Ok(px) = project_to_image(k, &pc) {
                hull.umin = hull.umin.min(px.u);
                hull.vmin = hull.vmin.min(px.v);
                hull.umax = hull.umax.max(px.u);
                hull.vmax = hull.vmax.max(px.v);
            }
        }
        let hull = hull.clip(k);
        if hull.is_valid() {
            boxes.push(VisibleBox {
                object_id: obj.id,
                bbox: hull,
                depth: center.z,
            });
        }
    }
    let occluded: Vec<bool> = boxes
        .iter()
        .map(|b| {
            let area = b.bbox.area();
            boxes.iter().any(|o| {
                o.object_id != b.object_id
                    && o.depth < b.depth
                    && o.bbox.intersection_area(&b.bbox) >= OCCLUSION_COVERAGE * area
            })
        })
        .collect();
    boxes
        .into_iter()
        .zip(occluded)
        .filter(|(_, occ)| !occ)
        .map(|(b, _)| b)
        .collect()
}

pub fn camera_observe<R: Rng + ?Sized>(
    k: &CameraIntrinsics,
    world_from_camera: &Pose,
    objects: &[GroundTruthObject],
    cfg: &SensorNoiseConfig,
    rng: &mut R,
    sensor_id: &str,
    timestamp: f64,
) -> Vec<Detection2D> {
    let mut out = Vec::new();
    for vis in visible_boxes(k, world_from_camera, objects, cfg.max_range) {
        let b = vis.bbox;
        let (u0, u1) = (b.umin + gauss(rng, cfg.pixel_sigma), b.umax + gauss(rng, cfg.pixel_sigma));
        let (v0, v1) = (b.vmin + gauss(rng, cfg.pixel_sigma), b.vmax + gauss(rng, cfg.pixel_sigma));
        let detected = bernoulli(rng, cfg.p_detect);
        let noisy = BBox {
            umin: u0.min(u1),
            vmin: v0.min(v1),
            umax: u0.max(u1),
            vmax: v0.max(v1),
        }
        .clip(k);
        if detected && noisy.is_valid() {
            out.push(Detection2D {
                bbox: noisy,
                score: TRUE_DETECTION_SCORE,
                sensor_id: sensor_id.to_string(),
                timestamp,
            });
        }
    }
    for _ in 0..poisson(rng, cfg.clutter_rate) {
        let w = uniform(rng, CLUTTER_BOX_MIN, CLUTTER_BOX_MAX).min(k.width);
        let h = uniform(rng, CLUTTER_BOX_MIN, CLUTTER_BOX_MAX).min(k.height);
        let umin = uniform(rng, 0.0, k.width - w);
        let vmin = uniform(rng, 0.0, k.height - h);
        let score = uniform(rng, 0.2, 0.6);
        out.push(Detection2D {
            bbox: BBox {
                umin,
                vmin,
                umax: umin + w,
                vmax: vmin + h,
            },
            score,
            sensor_id: sensor_id.to_string(),
            timestamp,
        });
    }
    out
}

/// Polar coordinates (range, azimuth, elevation) of a sensor-frame point.
pub fn to_polar(p: &Vec3) -> (f64, f64, f64) {
    let range = p.norm();
    let az = p.y.atan2(p.x);
    let el = p.z.atan2(p.x.hypot(p.y));
    (range, az, el)
}

pub fn from_polar(range: f64, az: f64, el: f64) -> Vec3 {
    let (se, ce) = el.sin_cos();
    let (sa, ca) = az.sin_cos();
    Vec3::new(range * ce * ca, range * ce * sa, range * se)
}

fn snr_db(range: f64) -> f64 {
    // r^-4 falloff, 30 dB at 10 m
    30.0 - 40.0 * (range.max(1.0) / 10.0).log10()
}

pub fn radar_observe<R: Rng + ?Sized>(
    world_from_radar: &Pose,
    sensor_velocity: &Vec3,
    objects: &[GroundTruthObject],
    cfg: &SensorNoiseConfig,
    rng: &mut R,
    sensor_id: &str,
    timestamp: f64,
) -> Vec<RadarPoint> {
    let radar_from_world = world_from_radar.inverse();
    let half_fov = 0.5 * cfg.fov_azimuth;
    let mut out = Vec::new();
    for obj in objects {
        let p = radar_from_world.transform_point(&obj.position);
        let (range, az, el) = to_polar(&p);
        if !(range > 0.0 && range <= cfg.max_range && az.abs() <= half_fov) {
            continue;
        }
        let v_rel = radar_from_world.transform_vector(&(obj.velocity - sensor_velocity));
        let radial = p.dot(&v_rel) / range;
        let dr = gauss(rng, cfg.range_sigma);
        let daz = gauss(rng, cfg.azimuth_sigma);
        let del = gauss(rng, cfg.azimuth_sigma);
        let ds = gauss(rng, cfg.speed_sigma);
        if !bernoulli(rng, cfg.p_detect) {
            continue;
        }
        let position = if dr == 0.0 && daz == 0.0 && del == 0.0 {
            p
        } else {
            from_polar((range + dr).max(1e-3), az + daz, el + del)
        };
        out.push(RadarPoint {
            position,
            radial_speed: radial + ds,
            snr: snr_db(range),
            sensor_id: sensor_id.to_string(),
            timestamp,
        });
    }
    for _ in 0..poisson(rng, cfg.clutter_rate) {
        let range = uniform(rng, 1.0_f64.min(cfg.max_range), cfg.max_range);
        let az = uniform(rng, -half_fov, half_fov);
        let radial_speed = uniform(rng, -10.0, 10.0);
        out.push(RadarPoint {
            position: from_polar(range, az, 0.0),
            radial_speed,
            snr: snr_db(range) - 10.0,
            sensor_id: sensor_id.to_string(),
            timestamp,
        });
    }
    out
}
