//! Simulated multi-view capture: projection, detection noise and occlusion,
//! cross-view matching, triangulation and identity tracking.

mod camera;
mod detect;
mod epipolar;
mod hungarian;
mod reconstruct;
mod track;
mod triangulate;

use thiserror::Error;

pub use camera::{default_rig, load_rig, parse_rig, save_rig, write_rig, Camera, Rig};
pub use detect::{simulate_detections, DetectionParams, DetectionSet};
pub use epipolar::{epipolar_cost, epipolar_midhip_cost, fundamental, point_line_distance};
pub use hungarian::{assignment_cost, hungarian_match};
pub use reconstruct::{reconstruct, ReconstructParams, Reconstruction3D};
pub use track::track_identities;
pub use triangulate::{normalize_sigma, triangulate, SIGMA_MAX_PX};

#[derive(Debug, Error, PartialEq)]
pub enum MocapError {
    #[error("point projects behind the camera (w = {0})")]
    BehindCamera(f64),
    #[error("camera centres coincide")]
    DegenerateGeometry,
    #[error("every complete assignment uses an infinite cost")]
    InfeasibleAll,
    #[error("triangulation needs at least 2 views, got {0}")]
    InsufficientViews(usize),
    #[error("projection matrix has a singular left 3x3 block")]
    SingularCamera,
    #[error("inconsistent shapes: {0}")]
    Shape(String),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MocapError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MocapError>;

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];
