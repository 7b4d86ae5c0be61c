use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::morphology::{self, Polarity, WindowSize};

use super::edges::{EdgeMap, GradientField};
use super::model::{project_model, Pose2D, Segment, WireframeModel};
use super::simplex::{nelder_mead, SimplexOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("lost track: alignment score {score:.3} below threshold")]
    LostTrack { score: f64, pose: Pose2D },
    #[error("projected model has zero total length")]
    ZeroLength,
    #[error("invalid pose {0:?}")]
    InvalidPose(Pose2D),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// ROI margin around the projected model, in multiples of its extent.
    pub roi_margin: f64,
    /// Distance at which a sample stops contributing to the score, pixels.
    pub d_max: f64,
    pub min_score: f64,
    /// Hysteresis thresholds as fractions of the ROI's peak gradient.
    pub edge_low: f64,
    pub edge_high: f64,
    /// ROIs whose peak gradient stays below this (DN/px) yield no edges.
    pub min_edge_gradient: f64,
    pub polarity: Polarity,
    /// Top-hat window; `None` sizes it from the projected model.
    pub window: Option<WindowSize>,
    /// Initial simplex steps: x px, y px, scale fraction, angle degrees.
    pub step_xy: f64,
    pub step_scale_frac: f64,
    pub step_angle_deg: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Extra simplex restarts from the best vertex.
    pub restarts: usize,
    /// Largest accepted relative scale change per frame.
    pub max_scale_change: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            roi_margin: 1.5,
            d_max: 4.0,
            min_score: 0.5,
            edge_low: 0.1,
            edge_high: 0.3,
            min_edge_gradient: 8.0,
            polarity: Polarity::BrightObjects,
            window: None,
            step_xy: 2.0,
            step_scale_frac: 0.02,
            step_angle_deg: 2.0,
            tol: 1e-7,
            max_iter: 600,
            restarts: 1,
            max_scale_change: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackResult {
    pub pose: Pose2D,
    pub score: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl TrackResult {
    pub const CSV_HEADER: &'static str = "frame,tx,ty,s,theta_deg,score,converged";

    pub fn csv_row(&self, frame: usize) -> String {
        let p = self.pose;
        format!(
            "{frame},{:.4},{:.4},{:.6},{:.4},{:.5},{}",
            p.tx, p.ty, p.s, p.theta_deg, self.score, self.converged as u8
        )
    }
}

fn score_field(
    segments: &[Segment],
    edges: &EdgeMap,
    offset: (f64, f64),
    d_max: f64,
) -> Result<f64, TrackError> {
    let mut total = 0.0;
    let mut samples = 0usize;
    for seg in segments {
        let len = seg.length();
        if len <= 0.0 {
            continue;
        }
        let n = len.ceil().max(1.0) as usize;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let x = seg.a.0 + t * (seg.b.0 - seg.a.0) - offset.0;
            let y = seg.a.1 + t * (seg.b.1 - seg.a.1) - offset.1;
            if let Some(d) = edges.distance_at(x, y) {
                total += (1.0 - d / d_max).max(0.0);
            }
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(TrackError::ZeroLength);
    }
    Ok(total / samples as f64)
}

/// Mean clamped-linear closeness of the projected segments to the edges,
/// sampled once per pixel of arc length.
pub fn alignment_score(
    segments: &[Segment],
    edges: &EdgeMap,
    d_max: f64,
) -> Result<f64, TrackError> {
    assert!(d_max > 0.0, "d_max must be positive");
    score_field(segments, edges, (0.0, 0.0), d_max)
}

fn projected_bounds(segments: &[Segment]) -> (f64, f64, f64, f64) {
    segments.iter().flat_map(|s| [s.a, s.b]).fold(
        (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ),
        |(x0, y0, x1, y1), p| (x0.min(p.0), y0.min(p.1), x1.max(p.0), y1.max(p.1)),
    )
}

/// Refines `prev` against the contours of `image` around the projected model.
pub fn track_frame(
    image: &GrayImage,
    model: &WireframeModel,
    prev: &Pose2D,
    cfg: &TrackerConfig,
) -> Result<TrackResult, TrackError> {
    let (w, h) = (image.width() as f64, image.height() as f64);
    if !prev.is_valid() || prev.tx < 0.0 || prev.ty < 0.0 || prev.tx >= w || prev.ty >= h {
        return Err(TrackError::InvalidPose(*prev));
    }
    let projected = project_model(model, prev);
    let (bx0, by0, bx1, by1) = projected_bounds(&projected);
    let extent = (bx1 - bx0).max(by1 - by0).max(1.0);
    let margin = cfg.roi_margin * extent;
    let x0 = (bx0 - margin).floor().max(0.0) as usize;
    let y0 = (by0 - margin).floor().max(0.0) as usize;
    let x1 = ((bx1 + margin).ceil() as usize).min(image.width() - 1);
    let y1 = ((by1 + margin).ceil() as usize).min(image.height() - 1);
    if x1 <= x0 || y1 <= y0 {
        return Err(TrackError::InvalidPose(*prev));
    }
    let roi = image.crop(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    let window = cfg
        .window
        .unwrap_or_else(|| WindowSize::covering(1.1 * extent));
    let filtered = morphology::tophat(&roi, window, cfg.polarity);
    let gradient = GradientField::compute(&filtered);
    let peak = gradient.max_magnitude();
    let mask = if peak < cfg.min_edge_gradient {
        crate::image::BinaryImage::new(roi.width(), roi.height())
    } else {
        gradient.canny(cfg.edge_low * peak, cfg.edge_high * peak)
    };
    let edges = EdgeMap::with_subpixel(mask, &gradient);
    let offset = (x0 as f64, y0 as f64);

    // a shrinking model can always collapse onto a single contour, so the
    // search is confined to plausible inter-frame motion
    let (s_lo, s_hi) = (
        prev.s / (1.0 + cfg.max_scale_change),
        prev.s * (1.0 + cfg.max_scale_change),
    );
    let objective = |v: &[f64]| {
        if !(v[2] >= s_lo && v[2] <= s_hi)
            || (v[0] - prev.tx).abs() > margin
            || (v[1] - prev.ty).abs() > margin
        {
            return f64::INFINITY;
        }
        let pose = Pose2D::from_slice(v);
        let segs = project_model(model, &pose);
        match score_field(&segs, &edges, offset, cfg.d_max) {
            Ok(s) => 1.0 - s,
            Err(_) => f64::INFINITY,
        }
    };
    let opts = SimplexOptions {
        steps: vec![
            cfg.step_xy,
            cfg.step_xy,
            cfg.step_scale_frac * prev.s,
            cfg.step_angle_deg,
        ],
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    let start = [prev.tx, prev.ty, prev.s, prev.theta_deg];
    let mut best = nelder_mead(objective, &start, &opts);
    let mut evaluations = best.evaluations;
    for _ in 0..cfg.restarts {
        let again = nelder_mead(objective, &best.x, &opts);
        evaluations += again.evaluations;
        if again.value <= best.value {
            best = again;
        }
    }
    let pose = Pose2D::from_slice(&best.x);
    let score = 1.0 - best.value;
    if score < cfg.min_score {
        return Err(TrackError::LostTrack { score, pose });
    }
    Ok(TrackResult {
        pose,
        score,
        converged: best.converged,
        evaluations,
    })
}
