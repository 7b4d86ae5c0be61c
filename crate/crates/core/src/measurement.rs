//! Camera geometry: focal-length sizing and conversion of image poses into
//! line-of-sight, range and roll measurements.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::DetectionResult;
use crate::tracking::{Pose2D, WireframeModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("invalid pose: scale {0} must be positive")]
    InvalidPose(f64),
    #[error("detection has zero apparent diameter")]
    ZeroDiameter,
    #[error("invalid sizing input: {0}")]
    InvalidInput(String),
    #[error(
        "range ratio {ratio:.1} exceeds the single-camera limit {limit:.1}; \
         split the range across {cameras} cameras"
    )]
    Infeasible {
        ratio: f64,
        limit: f64,
        cameras: usize,
    },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Focal length, pixels.
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    pub cx: f64,
    pub cy: f64,
    /// Pixel-level measurement noise, pixels.
    pub sigma_px: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::centered(8000.0, 512, 512)
    }
}

impl CameraModel {
    /// Principal point at the central pixel-center position.
    pub fn centered(focal_px: f64, width: usize, height: usize) -> Self {
        Self {
            focal_px,
            width,
            height,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            sigma_px: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        if !(self.focal_px > 0.0) {
            return Err(MeasurementError::InvalidCamera(format!(
                "focal length must be positive, got {}",
                self.focal_px
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(MeasurementError::InvalidCamera(
                "image size must be non-zero".into(),
            ));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(MeasurementError::InvalidCamera(format!(
                "principal point ({}, {}) outside the image",
                self.cx, self.cy
            )));
        }
        if !(self.sigma_px >= 0.0) {
            return Err(MeasurementError::InvalidCamera(format!(
                "sigma_px must be non-negative, got {}",
                self.sigma_px
            )));
        }
        Ok(())
    }

    /// Half field of view along x, degrees.
    pub fn half_fov_deg(&self) -> f64 {
        (self.width as f64 / 2.0 / self.focal_px)
            .atan()
            .to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Absent when only the line of sight is trusted.
    pub range_m: Option<f64>,
    pub roll_deg: f64,
}

impl Measurement {
    pub const CSV_HEADER: &'static str = "t,azimuth_deg,elevation_deg,range_m,roll_deg";

    pub fn csv_row(&self) -> String {
        let range = self.range_m.map_or(String::new(), |r| format!("{r:.4}"));
        format!(
            "{:.3},{:.6},{:.6},{},{:.4}",
            self.t, self.azimuth_deg, self.elevation_deg, range, self.roll_deg
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocalLengthPlan {
    pub f_min: f64,
    pub f_max: f64,
    pub recommended: f64,
}

pub const DEFAULT_MIN_APPARENT_PX: f64 = 5.0;
pub const DEFAULT_HALF_IMAGE_PX: f64 = 256.0;

/// Focal-length interval keeping the target at least `s_min` pixels at the
/// far range and at most `s_half` pixels at the near range.
pub fn select_focal_length(
    range_far: f64,
    range_near: f64,
    target_size: f64,
    s_min: f64,
    s_half: f64,
) -> Result<FocalLengthPlan, MeasurementError> {
    if !(range_far > range_near && range_near > 0.0) {
        return Err(MeasurementError::InvalidInput(format!(
            "need range_far > range_near > 0, got {range_far} and {range_near}"
        )));
    }
    if !(target_size > 0.0) || !(s_min > 0.0) || !(s_half > s_min) {
        return Err(MeasurementError::InvalidInput(
            "target size and pixel bounds must be positive with s_half > s_min".into(),
        ));
    }
    let f_min = range_far * s_min / target_size;
    let f_max = range_near * s_half / target_size;
    if f_min > f_max {
        let ratio = range_far / range_near;
        let limit = s_half / s_min;
        let cameras = (ratio.ln() / limit.ln()).ceil() as usize;
        return Err(MeasurementError::Infeasible {
            ratio,
            limit,
            cameras,
        });
    }
    Ok(FocalLengthPlan {
        f_min,
        f_max,
        recommended: (f_min * f_max).sqrt(),
    })
}

pub fn pose_to_measurement(
    pose: &Pose2D,
    cam: &CameraModel,
    t: f64,
) -> Result<Measurement, MeasurementError> {
    if !(pose.s > 0.0) {
        return Err(MeasurementError::InvalidPose(pose.s));
    }
    Ok(Measurement {
        t,
        azimuth_deg: ((pose.tx - cam.cx) / cam.focal_px).atan().to_degrees(),
        elevation_deg: ((pose.ty - cam.cy) / cam.focal_px).atan().to_degrees(),
        range_m: Some(cam.focal_px / pose.s),
        roll_deg: pose.theta_deg,
    })
}

/// Inverse of [`pose_to_measurement`]; needs the range.
pub fn measurement_to_pose(m: &Measurement, cam: &CameraModel) -> Option<Pose2D> {
    let range = m.range_m?;
    Some(Pose2D::new(
        cam.cx + cam.focal_px * m.azimuth_deg.to_radians().tan(),
        cam.cy + cam.focal_px * m.elevation_deg.to_radians().tan(),
        cam.focal_px / range,
        m.roll_deg,
    ))
}

pub fn detection_to_pose(
    det: &DetectionResult,
    model: &WireframeModel,
) -> Result<Pose2D, MeasurementError> {
    if !(det.diameter > 0.0) {
        return Err(MeasurementError::ZeroDiameter);
    }
    Ok(Pose2D::new(
        det.centroid.0,
        det.centroid.1,
        det.diameter / model.body_diameter,
        det.attitude_deg,
    ))
}

/// Range of a target of `size_m` meters that spans `size_px` pixels.
pub fn range_from_apparent_size(focal_px: f64, size_m: f64, size_px: f64) -> f64 {
    focal_px * size_m / size_px
}

/// First-order relative range error from an apparent-size error of
/// `size_error_px` on a target spanning `size_px`.
pub fn relative_range_error(size_px: f64, size_error_px: f64) -> f64 {
    size_error_px / size_px
}

/// Camera axes in the Hill frame: `u` along image x, `v` along image y and
/// `boresight` along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraAttitude {
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub boresight: Vector3<f64>,
}

impl CameraAttitude {
    /// Boresight along `los`; image x is kept as close to the negative
    /// cross-track axis as the boresight allows.
    pub fn looking_along(los: &Vector3<f64>) -> Self {
        let b = los.normalize();
        let mut up = Vector3::new(0.0, -1.0, 0.0);
        if up.cross(&b).norm() < 1e-6 {
            up = Vector3::new(1.0, 0.0, 0.0);
        }
        let u = (up - b * up.dot(&b)).normalize();
        let v = b.cross(&u);
        Self { u, v, boresight: b }
    }

    /// Attitude pointing at the target from chaser position `r` (relative
    /// to the target).
    pub fn pointing_at_target(r: &Vector3<f64>) -> Self {
        Self::looking_along(&(-r))
    }

    /// Image pose of the target seen from relative position `r`.
    pub fn project(&self, r: &Vector3<f64>, cam: &CameraModel, roll_deg: f64) -> Pose2D {
        let p = -r;
        let depth = p.dot(&self.boresight);
        Pose2D::new(
            cam.cx + cam.focal_px * p.dot(&self.u) / depth,
            cam.cy + cam.focal_px * p.dot(&self.v) / depth,
            cam.focal_px / depth,
            roll_deg,
        )
    }

    /// Relative position implied by a camera measurement; `range` is the
    /// depth along the boresight.
    pub fn relative_position(
        &self,
        azimuth_deg: f64,
        elevation_deg: f64,
        range: f64,
    ) -> Vector3<f64> {
        let los = self.u * azimuth_deg.to_radians().tan()
            + self.v * elevation_deg.to_radians().tan()
            + self.boresight;
        -los * range
    }

    /// Unit line of sight (target as seen from the chaser).
    pub fn line_of_sight(&self, azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
        (-self.relative_position(azimuth_deg, elevation_deg, 1.0)).normalize()
    }
}
