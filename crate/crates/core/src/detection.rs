//! Autonomous satellite detection: top-hat filtering, automatic
//! binarization, region filtering and shape analysis.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{BinaryImage, GrayImage};
use crate::morphology::{self, Polarity, WindowSize};
use crate::segmentation::{
    self, Component, Region, SegmentationError, ThresholdMethod, NEIGHBOURS_8,
};
use crate::tracking::SatelliteGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("no target: no region passed the body shape test")]
    NoTarget,
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field}: minimum {min} exceeds maximum {max}")]
    Range {
        field: &'static str,
        min: f64,
        max: f64,
    },
    #[error("{field} must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub window: WindowSize,
    pub polarity: Polarity,
    pub threshold_method: ThresholdMethod,
    pub area_min: usize,
    pub area_max: usize,
    pub contrast_min: f64,
    pub compactness_min: f64,
    pub rectangularity_min: f64,
    pub pairing_max_distance: f64,
    /// Binary opening for a second pass when the raw mask yields no target
    /// or a doubtful one;
    /// cuts thin bridges such as a star halo touching the body.
    pub mask_opening: Option<WindowSize>,
    /// Raw-pass results below this confidence also get the second pass,
    /// and the more confident of the two is kept.
    pub retry_confidence: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window: WindowSize::new(17).expect("odd"),
            polarity: Polarity::BrightObjects,
            threshold_method: ThresholdMethod::MaxEntropy,
            area_min: 60,
            area_max: 6000,
            contrast_min: 40.0,
            compactness_min: 0.75,
            rectangularity_min: 0.70,
            pairing_max_distance: 60.0,
            mask_opening: Some(WindowSize::new(5).expect("odd")),
            retry_confidence: 0.25,
        }
    }
}

impl DetectionConfig {
    /// Copy with the window, area range, pairing distance and opening
    /// scaled to a body expected to span `body_diameter_px`.
    pub fn scaled_to(&self, body_diameter_px: f64, geometry: &SatelliteGeometry) -> Self {
        let s = body_diameter_px / geometry.body_diameter_m;
        let body_area = std::f64::consts::PI * (body_diameter_px / 2.0).powi(2);
        let area_min = (0.15 * body_area).floor().max(4.0) as usize;
        Self {
            window: WindowSize::covering(1.2 * geometry.extent_m() * s),
            area_min,
            area_max: ((3.0 * body_area).ceil() as usize).max(area_min + 1),
            pairing_max_distance: 3.0 * geometry.panel_offset_m * s,
            mask_opening: self
                .mask_opening
                .map(|_| WindowSize::covering((body_diameter_px / 4.0).clamp(3.0, 15.0))),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.area_min > self.area_max {
            return Err(ConfigError::Range {
                field: "area",
                min: self.area_min as f64,
                max: self.area_max as f64,
            });
        }
        for (field, value) in [
            ("contrast_min", self.contrast_min),
            ("compactness_min", self.compactness_min),
            ("rectangularity_min", self.rectangularity_min),
            ("pairing_max_distance", self.pairing_max_distance),
            ("retry_confidence", self.retry_confidence),
        ] {
            if !(value >= 0.0) {
                return Err(ConfigError::Negative { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub body: Region,
    pub panel: Option<Region>,
    pub centroid: (f64, f64),
    /// Diameter of the disk with the body's area, in pixels.
    pub diameter: f64,
    /// Panel long-axis direction pointing away from the body, degrees.
    pub attitude_deg: f64,
    pub confidence: f64,
}

/// Keeps regions with area in `[area_min, area_max]` and local contrast at
/// least `contrast_min`, preserving order.
pub fn filter_regions(regions: &[Region], cfg: &DetectionConfig) -> Vec<Region> {
    regions
        .iter()
        .filter(|r| passes_area(r.area, cfg) && r.local_contrast >= cfg.contrast_min)
        .cloned()
        .collect()
}

fn passes_area(area: usize, cfg: &DetectionConfig) -> bool {
    (cfg.area_min..=cfg.area_max).contains(&area)
}

/// MBR aspect ratio up to which a compact region counts as round.
const ROUND_ASPECT_MAX: f64 = 1.5;

fn is_round(r: &Region) -> bool {
    r.mbr.half_length <= ROUND_ASPECT_MAX * r.mbr.half_width
}

/// Picks the body (most compact candidate, round ones first) and the panel
/// (most rectangular of the rest, near the body). Small panels can pass the
/// compactness test, hence the roundness preference.
pub fn shape_select(
    candidates: &[Region],
    cfg: &DetectionConfig,
) -> (Option<Region>, Option<Region>) {
    let body_idx = candidates
        .iter()
        .enumerate()
        .filter(|(_, r)| r.compactness >= cfg.compactness_min)
        .max_by(|a, b| {
            (is_round(a.1), a.1.compactness)
                .partial_cmp(&(is_round(b.1), b.1.compactness))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i);
    let body = body_idx.map(|i| candidates[i].clone());
    let panel = candidates
        .iter()
        .enumerate()
        .filter(|&(i, r)| Some(i) != body_idx && r.rectangularity >= cfg.rectangularity_min)
        .filter(|(_, r)| {
            body.as_ref().is_none_or(|b| {
                let (dx, dy) = (r.mbr.center.0 - b.centroid.0, r.mbr.center.1 - b.centroid.1);
                dx.hypot(dy) <= cfg.pairing_max_distance
            })
        })
        .max_by(|a, b| a.1.rectangularity.total_cmp(&b.1.rectangularity))
        .map(|(_, r)| r.clone());
    (body, panel)
}

/// Intermediate products of one detection pass.
#[derive(Debug, Clone)]
pub struct DetectionTrace {
    pub filtered: GrayImage,
    pub level: u8,
    /// The regions come from the opened mask of the second pass.
    pub opened: bool,
    /// Attributed regions whose area lies in the configured range.
    pub sized: Vec<Region>,
    /// Regions passing the area and contrast filters.
    pub candidates: Vec<Region>,
    pub result: Result<DetectionResult, DetectionError>,
}

/// Runs the full detection cascade and keeps the intermediate products.
pub fn analyze(image: &GrayImage, cfg: &DetectionConfig) -> Result<DetectionTrace, DetectionError> {
    let filtered = morphology::tophat(image, cfg.window, cfg.polarity);
    let level = segmentation::threshold(&filtered.histogram(), cfg.threshold_method)?;
    let mask = segmentation::binarize(&filtered, level);
    let (sized, candidates, result) = select(&segmentation::label_regions(&mask), &filtered, cfg);
    let trace = DetectionTrace {
        filtered,
        level,
        opened: false,
        sized,
        candidates,
        result,
    };
    let raw_confidence = trace.result.as_ref().map_or(-1.0, |d| d.confidence);
    let Some(k) = cfg.mask_opening else {
        return Ok(trace);
    };
    if raw_confidence >= cfg.retry_confidence {
        return Ok(trace);
    }
    let (sized, candidates, result) = select(&split_components(&mask, k), &trace.filtered, cfg);
    if result
        .as_ref()
        .map_or(true, |d| d.confidence <= raw_confidence)
    {
        return Ok(trace);
    }
    Ok(DetectionTrace {
        opened: true,
        sized,
        candidates,
        result,
        ..trace
    })
}

type Selection = (
    Vec<Region>,
    Vec<Region>,
    Result<DetectionResult, DetectionError>,
);

fn select(components: &[Component], filtered: &GrayImage, cfg: &DetectionConfig) -> Selection {
    // Attributes are only needed for regions that can pass the area test.
    let sized: Vec<Region> = components
        .iter()
        .filter(|c| passes_area(c.pixels.len(), cfg))
        .map(|c| segmentation::region_attributes(c, filtered))
        .collect();
    let candidates = filter_regions(&sized, cfg);
    let (body, panel) = shape_select(&candidates, cfg);
    let result = match body {
        None => Err(DetectionError::NoTarget),
        Some(body) => Ok(build_result(body, panel, cfg)),
    };
    (sized, candidates, result)
}

/// Splits the mask along the bridges an opening of size `k` removes.
///
/// The components of the opened mask act as seeds; every raw foreground
/// pixel within reach of the opening is given to the seed it is
/// geodesically closest to. Pixels the opening cannot reach, such as
/// isolated stars, are dropped.
fn split_components(mask: &BinaryImage, k: WindowSize) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let to_gray = |m: &BinaryImage| {
        GrayImage::from_vec(
            w,
            h,
            m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
        .expect("same shape")
    };
    let opened = morphology::dilate(&morphology::erode(&to_gray(mask), k), k);
    let reach = morphology::dilate(&opened, k);
    let seeds = segmentation::label_regions(&segmentation::binarize(&opened, 0));

    let mut owner = vec![0u32; w * h];
    let mut queue = VecDeque::new();
    for c in &seeds {
        for &(x, y) in &c.pixels {
            let i = y as usize * w + x as usize;
            owner[i] = c.label;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for (dx, dy) in NEIGHBOURS_8 {
            let (qx, qy) = (x + dx as i64, y + dy as i64);
            if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                continue;
            }
            let q = qy as usize * w + qx as usize;
            if owner[q] == 0 && mask.bits()[q] && reach.pixels()[q] > 0 {
                owner[q] = owner[i];
                queue.push_back(q);
            }
        }
    }
    let mut pixels: Vec<Vec<(u32, u32)>> = vec![Vec::new(); seeds.len()];
    for (i, &o) in owner.iter().enumerate() {
        if o > 0 {
            pixels[o as usize - 1].push(((i % w) as u32, (i / w) as u32));
        }
    }
    pixels
        .into_iter()
        .enumerate()
        .map(|(i, p)| Component::from_pixels(i as u32 + 1, p))
        .collect()
}

pub fn detect_target(
    image: &GrayImage,
    cfg: &DetectionConfig,
) -> Result<DetectionResult, DetectionError> {
    analyze(image, cfg)?.result
}

/// Tries `cfg` as given, then [`DetectionConfig::scaled_to`] over a ladder of
/// growing body sizes up to what fits in the frame. For cold starts at an
/// unknown range. The ladder starts at the body size whose scaled area
/// minimum equals `cfg.area_min`, so it never admits smaller blobs (stars)
/// than the base configuration does.
pub fn detect_target_any_scale(
    image: &GrayImage,
    cfg: &DetectionConfig,
    geometry: &SatelliteGeometry,
) -> Result<DetectionResult, DetectionError> {
    let first = detect_target(image, cfg);
    if !matches!(first, Err(DetectionError::NoTarget)) {
        return first;
    }
    let frame = image.width().min(image.height()) as f64;
    let mut body_px = 2.0 * (cfg.area_min as f64 / (0.15 * std::f64::consts::PI)).sqrt();
    while 1.2 * geometry.extent_m() * body_px / geometry.body_diameter_m <= frame {
        if let Ok(d) = detect_target(image, &cfg.scaled_to(body_px, geometry)) {
            return Ok(d);
        }
        body_px *= std::f64::consts::SQRT_2;
    }
    first
}

fn margin(value: f64, threshold: f64) -> f64 {
    if threshold >= 1.0 {
        return if value >= threshold { 1.0 } else { 0.0 };
    }
    ((value - threshold) / (1.0 - threshold)).clamp(0.0, 1.0)
}

fn build_result(body: Region, panel: Option<Region>, cfg: &DetectionConfig) -> DetectionResult {
    let centroid = body.centroid;
    let diameter = 2.0 * (body.area as f64 / std::f64::consts::PI).sqrt();
    let attitude_deg = panel.as_ref().map_or(0.0, |p| {
        let axis = p.mbr.angle_deg;
        let (ux, uy) = (axis.to_radians().cos(), axis.to_radians().sin());
        let (dx, dy) = (p.mbr.center.0 - centroid.0, p.mbr.center.1 - centroid.1);
        let a = if ux * dx + uy * dy >= 0.0 {
            axis
        } else {
            axis + 180.0
        };
        crate::tracking::normalize_angle_deg(a)
    });
    let panel_factor = panel
        .as_ref()
        .map_or(0.5, |p| margin(p.rectangularity, cfg.rectangularity_min));
    let confidence = margin(body.compactness, cfg.compactness_min) * panel_factor;
    DetectionResult {
        body,
        panel,
        centroid,
        diameter,
        attitude_deg,
        confidence,
    }
}
