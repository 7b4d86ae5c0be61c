use serde::{Deserialize, Serialize};

use super::normalize_angle_deg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }
}

/// Image placement of a wireframe model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    /// Image position of the model reference point, pixels.
    pub tx: f64,
    pub ty: f64,
    /// Pixels per meter.
    pub s: f64,
    /// Roll from the image x axis towards the image y axis, degrees.
    pub theta_deg: f64,
}

impl Pose2D {
    pub fn new(tx: f64, ty: f64, s: f64, theta_deg: f64) -> Self {
        Self {
            tx,
            ty,
            s,
            theta_deg: normalize_angle_deg(theta_deg),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.s > 0.0 && self.tx.is_finite() && self.ty.is_finite() && self.theta_deg.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.tx, self.ty, self.s, self.theta_deg]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Maps a model point (meters) to image coordinates.
    #[inline]
    pub fn apply(&self, reference: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let (sn, cs) = self.theta_deg.to_radians().sin_cos();
        let (dx, dy) = ((p.0 - reference.0) * self.s, (p.1 - reference.1) * self.s);
        (self.tx + cs * dx - sn * dy, self.ty + sn * dx + cs * dy)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose2D {
        Pose2D {
            tx: self.tx + dx,
            ty: self.ty + dy,
            ..*self
        }
    }
}

/// Physical layout of the simulated client: a round body with one
/// rectangular panel offset along the model x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatelliteGeometry {
    pub body_diameter_m: f64,
    pub panel_length_m: f64,
    pub panel_width_m: f64,
    /// Body center to panel center, meters.
    pub panel_offset_m: f64,
}

impl Default for SatelliteGeometry {
    fn default() -> Self {
        Self {
            body_diameter_m: 2.0,
            panel_length_m: 1.6,
            panel_width_m: 0.7,
            panel_offset_m: 2.2,
        }
    }
}

impl SatelliteGeometry {
    /// Panel corners in model coordinates.
    pub fn panel_corners(&self) -> [(f64, f64); 4] {
        let (hl, hw, c) = (
            self.panel_length_m / 2.0,
            self.panel_width_m / 2.0,
            self.panel_offset_m,
        );
        [(c - hl, -hw), (c + hl, -hw), (c + hl, hw), (c - hl, hw)]
    }

    /// Largest model extent, meters.
    pub fn extent_m(&self) -> f64 {
        let r = self.body_diameter_m / 2.0;
        let xmin = (-r).min(self.panel_offset_m - self.panel_length_m / 2.0);
        let xmax = r.max(self.panel_offset_m + self.panel_length_m / 2.0);
        let ymax = r.max(self.panel_width_m / 2.0);
        (xmax - xmin).max(2.0 * ymax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireframeModel {
    /// Line segments in model meters.
    pub segments: Vec<Segment>,
    pub reference: (f64, f64),
    /// Largest model extent, meters.
    pub reference_length: f64,
    /// Diameter of the body used to turn a detected blob size into scale.
    pub body_diameter: f64,
}

impl WireframeModel {
    pub fn new(
        segments: Vec<Segment>,
        reference: (f64, f64),
        reference_length: f64,
        body_diameter: f64,
    ) -> Result<Self, String> {
        if segments.is_empty() {
            return Err("wireframe model needs at least one segment".into());
        }
        if !(reference_length > 0.0) {
            return Err(format!(
                "reference length must be positive, got {reference_length}"
            ));
        }
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for s in &segments {
            for p in [s.a, s.b] {
                xmin = xmin.min(p.0);
                ymin = ymin.min(p.1);
                xmax = xmax.max(p.0);
                ymax = ymax.max(p.1);
            }
        }
        let (rx, ry) = reference;
        if rx < xmin || rx > xmax || ry < ymin || ry > ymax {
            return Err("reference point outside the segment bounding box".into());
        }
        Ok(Self {
            segments,
            reference,
            reference_length,
            body_diameter,
        })
    }

    /// Body outline as a regular polygon plus the panel rectangle; the
    /// reference point is the body center.
    ///
    /// The polygon vertices sit slightly outside the body circle so that the
    /// mean distance of the sides from the center equals the body radius.
    pub fn satellite(geometry: &SatelliteGeometry, circle_sides: usize) -> Self {
        let n = circle_sides.max(3);
        let half = std::f64::consts::PI / n as f64;
        let r = geometry.body_diameter_m / 2.0 * half / (half.cos() * half.sin().atanh());
        let ring: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let mut segments: Vec<Segment> = (0..n)
            .map(|i| Segment::new(ring[i], ring[(i + 1) % n]))
            .collect();
        let c = geometry.panel_corners();
        segments.extend((0..4).map(|i| Segment::new(c[i], c[(i + 1) % 4])));
        Self::new(
            segments,
            (0.0, 0.0),
            geometry.extent_m(),
            geometry.body_diameter_m,
        )
        .expect("satellite geometry is valid")
    }
}

pub fn project_model(model: &WireframeModel, pose: &Pose2D) -> Vec<Segment> {
    model
        .segments
        .iter()
        .map(|s| {
            Segment::new(
                pose.apply(model.reference, s.a),
                pose.apply(model.reference, s.b),
            )
        })
        .collect()
}
