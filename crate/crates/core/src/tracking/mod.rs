//! Model-based sub-pixel tracking of the client satellite.
//!
//! A 2-D wireframe is placed in the image by four parameters (reference
//! point position, scale, roll angle) and fitted to the edge map of a
//! top-hat filtered region of interest by maximizing a chamfer alignment
//! score with the simplex downhill method.

mod distance;
mod edges;
mod model;
mod simplex;
mod tracker;

pub use distance::{distance_transform, DistanceField, UNREACHABLE_DISTANCE};
pub use edges::{detect_edges, EdgeMap, GradientField, EDGE_SMOOTHING_SIGMA};
pub use model::{project_model, Pose2D, SatelliteGeometry, Segment, WireframeModel};
pub use simplex::{nelder_mead, SimplexOptions, SimplexResult};
pub use tracker::{alignment_score, track_frame, TrackError, TrackResult, TrackerConfig};

/// Folds an angle in degrees into `(-180, 180]`.
pub fn normalize_angle_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r > 180.0 {
        r -= 360.0;
    } else if r <= -180.0 {
        r += 360.0;
    }
    r
}
