//! Deterministic multi-agent camera-radar fusion testbed.
//!
//! Three pipeline modes share one set of components:
//! - `cr`: local camera-radar fusion feeding a GNN Kalman tracker
//! - `cr-covi`: `cr` plus remote tracks from vehicles and roadside units,
//!   fused by covariance intersection
//! - `cr-dist`: `cr` plus perception tasks offloaded to edge workers whose
//!   late results are merged by snapshot rollback and replay
//!
//! Everything runs on virtual time inside a seeded discrete-event loop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bus;
pub mod collab;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod offload;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod tracker;

pub use bus::{BusFrame, MsgType};
pub use collab::{CollabConfig, CollabCounters, RemoteTrackMsg};
pub use fusion::{Detection3D, DetectionSource};
pub use geometry::{CameraIntrinsics, Mat3, Pose, StateCov, StateVec, Vec3};
pub use metrics::{MetricsConfig, MetricsReport};
pub use offload::{OffloadConfig, OffloadCounters, TaskRequest, TaskResult, WorkerConfig};
pub use scenario::{load_scenario, Mode, RunOptions, RunOutput, RunReport, Scenario, ScenarioError};
pub use sensing::{BBox, Detection2D, GroundTruthObject, RadarPoint, SensorNoiseConfig};
pub use tracker::{Track, TrackRecord, TrackerConfig, TrackerState};
