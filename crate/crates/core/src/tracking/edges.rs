use std::collections::VecDeque;

use crate::image::{BinaryImage, GrayImage};

use super::distance::{nearest_edge_transform, DistanceField, NO_EDGE};

/// Standard deviation, in pixels, of the Gaussian applied before
/// differentiation.
pub const EDGE_SMOOTHING_SIGMA: f64 = 1.0;

/// Sub-pixel edge location with its unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub x: f32,
    pub y: f32,
    pub nx: f32,
    pub ny: f32,
}

/// Binary edge mask plus its distance field.
#[derive(Debug, Clone)]
pub struct EdgeMap {
    pub mask: BinaryImage,
    pub distance: DistanceField,
    nearest: Vec<u32>,
    /// Per edge pixel (raster index), when a gradient was available.
    points: Option<Vec<EdgePoint>>,
}

/// Variance of the Sobel operator's [1 2 1] smoothing tap.
const SOBEL_VARIANCE: f64 = 0.5;

/// Largest curvature correction applied to an edge point, px.
const MAX_CURVATURE_SHIFT: f32 = 0.5;

/// Beyond this chamfer distance the refined distance falls back to the
/// coarse field.
const REFINE_RADIUS: f64 = 3.0;

impl EdgeMap {
    pub fn from_mask(mask: BinaryImage) -> Self {
        let (distance, nearest) = nearest_edge_transform(&mask);
        Self {
            mask,
            distance,
            nearest,
            points: None,
        }
    }

    /// Edge map whose distances near edges are measured to the local edge
    /// line through the sub-pixel gradient peak.
    pub fn with_subpixel(mask: BinaryImage, gradient: &GradientField) -> Self {
        let points = gradient.edge_points(&mask);
        Self {
            points: Some(points),
            ..Self::from_mask(mask)
        }
    }

    /// Distance from `(x, y)` to the nearest edge; `None` outside the image.
    #[inline]
    pub fn distance_at(&self, x: f64, y: f64) -> Option<f64> {
        let coarse = self.distance.sample(x, y)?;
        let Some(points) = &self.points else {
            return Some(coarse);
        };
        if coarse > REFINE_RADIUS {
            return Some(coarse);
        }
        let (px, py) = (x.round() as usize, y.round() as usize);
        let idx = self.nearest[py * self.width() + px];
        if idx == NO_EDGE {
            return Some(coarse);
        }
        let e = points[idx as usize];
        let (dx, dy) = (x - e.x as f64, y - e.y as f64);
        let normal = dx * e.nx as f64 + dy * e.ny as f64;
        let along = (-dx * e.ny as f64 + dy * e.nx as f64).abs();
        // the contour continues through neighbouring pixels along the tangent
        Some(normal.hypot((along - 1.0).max(0.0)))
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn smooth(image: &GrayImage, sigma: f64) -> Vec<f32> {
    let (w, h) = (image.width() as i32, image.height() as i32);
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i32;
    let src: Vec<f32> = image.pixels().iter().map(|&p| p as f32).collect();
    let mut tmp = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x + i as i32 - r).clamp(0, w - 1);
                acc += kv * src[(y * w + xx) as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y + i as i32 - r).clamp(0, h - 1);
                acc += kv * tmp[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Smoothed Sobel gradient, in intensity units per pixel.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f32>,
    gy: Vec<f32>,
    magnitude: Vec<f32>,
    /// Variance of the combined smoothing and Sobel blur, px^2.
    blur_variance: f32,
}

impl GradientField {
    pub fn compute(image: &GrayImage) -> Self {
        Self::compute_with_sigma(image, EDGE_SMOOTHING_SIGMA)
    }

    pub fn compute_with_sigma(image: &GrayImage, sigma: f64) -> Self {
        let (w, h) = (image.width(), image.height());
        let s = if sigma > 0.0 {
            smooth(image, sigma)
        } else {
            image.pixels().iter().map(|&p| p as f32).collect()
        };
        let at = |x: isize, y: isize| {
            let xx = x.clamp(0, w as isize - 1) as usize;
            let yy = y.clamp(0, h as isize - 1) as usize;
            s[yy * w + xx]
        };
        let mut gx = vec![0f32; w * h];
        let mut gy = vec![0f32; w * h];
        let mut magnitude = vec![0f32; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                let i = y as usize * w + x as usize;
                gx[i] = dx / 8.0;
                gy[i] = dy / 8.0;
                magnitude[i] = gx[i].hypot(gy[i]);
            }
        }
        Self {
            width: w,
            height: h,
            gx,
            gy,
            magnitude,
            blur_variance: (sigma.max(0.0).powi(2) + SOBEL_VARIANCE) as f32,
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0f32, f32::max) as f64
    }

    pub fn magnitude(&self) -> &[f32] {
        &self.magnitude
    }

    fn nms_direction(&self, i: usize) -> (isize, isize) {
        let angle = self.gy[i].atan2(self.gx[i]).to_degrees();
        let a = if angle < 0.0 { angle + 180.0 } else { angle };
        if !(22.5..157.5).contains(&a) {
            (1, 0)
        } else if a < 67.5 {
            (1, 1)
        } else if a < 112.5 {
            (0, 1)
        } else {
            (-1, 1)
        }
    }

    /// Divergence of the unit gradient field, i.e. the signed curvature of
    /// the isophote through `(x, y)`.
    fn normal_divergence(&self, x: usize, y: usize) -> f32 {
        let w = self.width;
        let unit = |xx: usize, yy: usize| {
            let j = yy * w + xx;
            let m = self.magnitude[j];
            if m > 0.0 {
                (self.gx[j] / m, self.gy[j] / m)
            } else {
                (0.0, 0.0)
            }
        };
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= self.height {
            return 0.0;
        }
        let (right, left) = (unit(x + 1, y).0, unit(x - 1, y).0);
        let (down, up) = (unit(x, y + 1).1, unit(x, y - 1).1);
        0.5 * (right - left) + 0.5 * (down - up)
    }

    /// Sub-pixel peak of the gradient magnitude along the suppression
    /// direction (parabola through three samples), for every mask pixel.
    fn edge_points(&self, mask: &BinaryImage) -> Vec<EdgePoint> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![
            EdgePoint {
                x: f32::NAN,
                y: f32::NAN,
                nx: 0.0,
                ny: 0.0,
            };
            w * h
        ];
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let i = y * w + x;
                let m = self.magnitude[i];
                let (nx, ny) = if m > 0.0 {
                    (self.gx[i] / m, self.gy[i] / m)
                } else {
                    (1.0, 0.0)
                };
                let mut offset = 0.0f32;
                let (dx, dy) = self.nms_direction(i);
                let (fx, fy) = (x as isize + dx, y as isize + dy);
                let (bx, by) = (x as isize - dx, y as isize - dy);
                if fx >= 0
                    && fy >= 0
                    && bx >= 0
                    && by >= 0
                    && (fx as usize) < w
                    && (fy as usize) < h
                    && (bx as usize) < w
                    && (by as usize) < h
                {
                    let fwd = self.magnitude[fy as usize * w + fx as usize];
                    let back = self.magnitude[by as usize * w + bx as usize];
                    let curvature = back - 2.0 * m + fwd;
                    if curvature < 0.0 {
                        offset = (0.5 * (back - fwd) / curvature).clamp(-0.5, 0.5);
                    }
                }
                // blur moves the gradient peak of a curved contour towards its
                // center of curvature by about variance * curvature / 2
                let shift = (0.5 * self.blur_variance * self.normal_divergence(x, y))
                    .clamp(-MAX_CURVATURE_SHIFT, MAX_CURVATURE_SHIFT);
                out[i] = EdgePoint {
                    x: x as f32 + offset * dx as f32 + shift * nx,
                    y: y as f32 + offset * dy as f32 + shift * ny,
                    nx,
                    ny,
                };
            }
        }
        out
    }

    /// Non-maximum suppression along the quantized gradient direction
    /// followed by hysteresis linking (8-connected) between `low` and `high`.
    pub fn canny(&self, low: f64, high: f64) -> BinaryImage {
        let (w, h) = (self.width, self.height);
        let mut mask = BinaryImage::new(w, h);
        if w < 3 || h < 3 {
            return mask;
        }
        let (low, high) = (low as f32, high as f32);
        let mut thin = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let m = self.magnitude[i];
                if m <= 0.0 || m < low {
                    continue;
                }
                let (dx, dy) = self.nms_direction(i);
                let fwd =
                    self.magnitude[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                let back =
                    self.magnitude[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
                // ties resolve towards the forward pixel so plateaus stay one pixel wide
                if m >= back && m > fwd {
                    thin[i] = if m >= high { 2 } else { 1 };
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| thin[i] == 2).collect();
        for &i in &queue {
            mask.set(i % w, i / w, true);
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                        continue;
                    }
                    let q = qy as usize * w + qx as usize;
                    if thin[q] == 1 && !mask.get(qx as usize, qy as usize) {
                        mask.set(qx as usize, qy as usize, true);
                        queue.push_back(q);
                    }
                }
            }
        }
        mask
    }
}

/// Canny-style edge detection with absolute gradient thresholds
/// (`0 <= low <= high`, intensity units per pixel).
pub fn detect_edges(image: &GrayImage, low: f64, high: f64) -> EdgeMap {
    assert!(
        0.0 <= low && low <= high,
        "edge thresholds must satisfy 0 <= low <= high"
    );
    let gradient = GradientField::compute(image);
    EdgeMap::with_subpixel(gradient.canny(low, high), &gradient)
}
