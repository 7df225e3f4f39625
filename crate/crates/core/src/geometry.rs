//! Reference frames, rigid poses and the pinhole camera model.
//!
//! Conventions used throughout the crate:
//! - world frame: x east, y north, z up
//! - agent / sensor mount frame: x forward, y left, z up
//! - camera optical frame: z forward, x right, y down
//!
//! A [`Pose`] is always "parent-from-child": `transform_point` maps a point
//! expressed in the child frame into the parent frame.

use std::ops::AddAssign;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type StateVec = Vector6<f64>;
pub type StateCov = Matrix6<f64>;

/// Symmetry tolerance for covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const EIGEN_FLOOR: f64 = -1e-9;
/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;
/// Depth below which a point is considered behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("covariance is not symmetric positive semidefinite: {0}")]
    NonPsd(String),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// parent-from-child rotation
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Builds a pose from yaw (about z), pitch (about y) and roll (about x),
    /// all in degrees, applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_ypr_deg(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        Self {
            rotation: rotation_from_ypr(yaw.to_radians(), pitch.to_radians(), roll.to_radians()),
            translation,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidRotation(
                "translation has non-finite component".into(),
            ));
        }
        let r = &self.rotation;
        let err = (r.transpose() * r - Mat3::identity()).abs().max();
        if !(err <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation(format!(
                "R^T R deviates from identity by {err:e}"
            )));
        }
        let det = r.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation(format!("det(R) = {det}")));
        }
        Ok(())
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a free vector (velocity, direction); translation is ignored.
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: maps other's child frame into self's parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Yaw angle (radians) of the child x axis in the parent frame.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

pub fn rotation_from_ypr(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let rz = Mat3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Mat3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// Rotation taking camera optical axes (z forward, x right, y down) into the
/// mount frame (x forward, y left, z up).
pub fn mount_from_optical() -> Mat3 {
    Mat3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("fx > 0 and fy > 0");
        }
        if !(self.cx > 0.0 && self.cx < self.width) {
            return bad("0 < cx < width");
        }
        if !(self.cy > 0.0 && self.cy < self.height) {
            return bad("0 < cy < height");
        }
        Ok(())
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.u < self.width && px.v >= 0.0 && px.v < self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

/// Pinhole projection of a camera-frame point. No clipping to image bounds.
pub fn project_to_image(k: &CameraIntrinsics, p_cam: &Vec3) -> Result<Pixel, GeometryError> {
    if p_cam.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera(p_cam.z));
    }
    Ok(Pixel {
        u: k.fx * p_cam.x / p_cam.z + k.cx,
        v: k.fy * p_cam.y / p_cam.z + k.cy,
    })
}

/// Block-diagonal `diag(R, R)` used to move [position, velocity] states.
pub fn state_rotation(r: &Mat3) -> StateCov {
    let mut t = StateCov::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    t
}

pub fn symmetrize<const N: usize>(
    m: &nalgebra::SMatrix<f64, N, N>,
) -> nalgebra::SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

pub fn check_symmetric<const N: usize>(
    m: &nalgebra::SMatrix<f64, N, N>,
) -> Result<(), GeometryError> {
    let scale = m.abs().max().max(1.0);
    let asym = (m - m.transpose()).abs().max();
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(GeometryError::NonPsd(format!("asymmetry {asym:e}")));
    }
    Ok(())
}

pub fn min_eigenvalue<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> f64 {
    let d = nalgebra::DMatrix::from_column_slice(N, N, symmetrize(m).as_slice());
    SymmetricEigen::new(d)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetry plus eigenvalue-floor check.
pub fn check_psd<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> Result<(), GeometryError> {
    check_symmetric(m)?;
    let min = min_eigenvalue(m);
    if !(min >= EIGEN_FLOOR) {
        return Err(GeometryError::NonPsd(format!("min eigenvalue {min:e}")));
    }
    Ok(())
}

/// Moves a [position, velocity] Gaussian through a rigid transform.
/// Position gets the full pose, velocity only the rotation.
pub fn transform_gaussian(
    pose: &Pose,
    mean: &StateVec,
    cov: &StateCov,
) -> Result<(StateVec, StateCov), GeometryError> {
    check_symmetric(cov)?;
    let t = state_rotation(&pose.rotation);
    let mut out = t * mean;
    out.fixed_rows_mut::<3>(0).add_assign(&pose.translation);
    let cov_out = symmetrize(&(t * cov * t.transpose()));
    Ok((out, cov_out))
}

pub fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}


/// Serde adapters writing vectors as `[x, y, ...]` and square matrices as
/// row-major nested arrays.
pub mod serde_arrays {
    use nalgebra::{SMatrix, SVector};
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer, const N: usize>(
            v: &SVector<f64, N>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
            d: D,
        ) -> Result<SVector<f64, N>, D::Error> {
            let xs = Vec::<f64>::deserialize(d)?;
            if xs.len() != N {
                return Err(D::Error::custom(format!(
                    "expected {N} components, got {}",
                    xs.len()
                )));
            }
            Ok(SVector::from_column_slice(&xs))
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer, const N: usize>(
            m: &SMatrix<f64, N, N>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            let rows: Vec<Vec<f64>> = (0..N)
                .map(|i| (0..N).map(|j| m[(i, j)]).collect())
                .collect();
            rows.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
            d: D,
        ) -> Result<SMatrix<f64, N, N>, D::Error> {
            let rows = Vec::<Vec<f64>>::deserialize(d)?;
            if rows.len() != N || rows.iter().any(|r| r.len() != N) {
                return Err(D::Error::custom(format!("expected {N}x{N} matrix")));
            }
            Ok(SMatrix::from_fn(|i, j| rows[i][j]))
        }
    }
}

/// Wire form of a pose: row-major rotation and translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    #[serde(with = "serde_arrays::matrix")]
    pub rotation: Mat3,
    #[serde(with = "serde_arrays::vector")]
    pub translation: Vec3,
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        Self {
            rotation: p.rotation,
            translation: p.translation,
        }
    }
}

impl From<PoseRecord> for Pose {
    fn from(p: PoseRecord) -> Self {
        Self {
            rotation: p.rotation,
            translation: p.translation,
        }
    }
}
