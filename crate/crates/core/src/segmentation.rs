//! Automatic binarization and attributed connected regions.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{BinaryImage, GrayImage, Histogram};
use crate::morphology::{self, WindowSize};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentationError {
    #[error("degenerate histogram: {occupied} occupied bin(s), need at least 2")]
    DegenerateHistogram { occupied: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    /// Maximum between-class variance.
    Otsu,
    /// Kapur's maximum sum of class entropies.
    MaxEntropy,
}

/// Ring width, in pixels, of the neighbourhood used for local contrast.
pub const CONTRAST_RING_WIDTH: usize = 5;

/// Upper clamp on compactness; tiny regions have traced perimeters that
/// make the raw ratio exceed 1.
pub const MAX_COMPACTNESS: f64 = 1.1;

/// Selects a threshold level from a histogram.
///
/// Candidate level `t` in `1..=255` splits the bins into `[0, t)` and
/// `[t, 255]`. When several adjacent levels share the maximal criterion
/// value, the midpoint of that plateau (rounded down) is returned.
pub fn threshold(hist: &Histogram, method: ThresholdMethod) -> Result<u8, SegmentationError> {
    let occupied = hist.occupied_bins();
    if occupied < 2 {
        return Err(SegmentationError::DegenerateHistogram { occupied });
    }
    let scores = match method {
        ThresholdMethod::Otsu => otsu_scores(hist),
        ThresholdMethod::MaxEntropy => kapur_scores(hist),
    };
    let best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = best.abs() * 1e-12 + 1e-300;
    let is_max = |t: usize| scores[t].is_some_and(|v| v >= best - tol);
    let lo = (1..=255)
        .find(|&t| is_max(t))
        .expect("at least one valid split");
    let mut hi = lo;
    while hi < 255 && is_max(hi + 1) {
        hi += 1;
    }
    Ok(((lo + hi) / 2) as u8)
}

/// Between-class variance (up to a constant factor) per candidate level;
/// `None` where a class would be empty.
fn otsu_scores(hist: &Histogram) -> [Option<f64>; 256] {
    let n: i128 = hist.counts.iter().map(|&c| c as i128).sum();
    let s: i128 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as i128 * c as i128)
        .sum();
    let mut out = [None; 256];
    let (mut n0, mut s0) = (0i128, 0i128);
    for t in 1..=255usize {
        n0 += hist.counts[t - 1] as i128;
        s0 += (t as i128 - 1) * hist.counts[t - 1] as i128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // n^2 * w0 * w1 * (mu0 - mu1)^2 = (n*s0 - n0*s)^2 / (n0*n1)
        let d = (n * s0 - n0 * s) as f64;
        out[t] = Some(d * d / (n0 as f64 * n1 as f64));
    }
    out
}

fn kapur_scores(hist: &Histogram) -> [Option<f64>; 256] {
    let n = hist.total() as f64;
    let p: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / n).collect();
    let plogp: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .collect();
    let mut out = [None; 256];
    let (mut p0, mut e0) = (0.0f64, 0.0f64);
    let (mut n0, total) = (0u64, hist.total());
    for t in 1..=255usize {
        p0 += p[t - 1];
        e0 += plogp[t - 1];
        n0 += hist.counts[t - 1];
        if n0 == 0 || n0 == total {
            continue;
        }
        let (p1, e1): (f64, f64) = (p[t..].iter().sum(), plogp[t..].iter().sum());
        // H = -sum (p/P) ln(p/P) = ln P - (sum p ln p) / P
        let h0 = p0.ln() - e0 / p0;
        let h1 = p1.ln() - e1 / p1;
        out[t] = Some(h0 + h1);
    }
    out
}

/// Foreground iff the pixel is strictly greater than `level`.
pub fn binarize(image: &GrayImage, level: u8) -> BinaryImage {
    let bits = image.pixels().iter().map(|&p| p > level).collect();
    BinaryImage::from_vec(image.width(), image.height(), bits).expect("same shape")
}

/// Axis-aligned inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.xmax - self.xmin + 1
    }

    pub fn height(&self) -> u32 {
        self.ymax - self.ymin + 1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin as f64
            && x <= self.xmax as f64
            && y >= self.ymin as f64
            && y <= self.ymax as f64
    }
}

/// An 8-connected foreground component before attribute computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    /// Pixel coordinates in raster order.
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BoundingBox,
}

impl Component {
    /// Builds a component from an arbitrary pixel set.
    pub fn from_pixels(label: u32, mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let bbox = bounding_box(&pixels);
        Self {
            label,
            pixels,
            bbox,
        }
    }
}

pub(crate) const NEIGHBOURS_8: [(i32, i32); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Partitions the foreground into 8-connected components labelled `1..=N`
/// in order of their first pixel in a raster scan.
pub fn label_regions(mask: &BinaryImage) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        let label = out.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (x, y) = ((p % w) as i32, (p / w) as i32);
            pixels.push((x as u32, y as u32));
            for (dx, dy) in NEIGHBOURS_8 {
                let (qx, qy) = (x + dx, y + dy);
                if qx < 0 || qy < 0 || qx >= w as i32 || qy >= h as i32 {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                if mask.bits()[q] && labels[q] == 0 {
                    labels[q] = label;
                    queue.push_back(q);
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let bbox = bounding_box(&pixels);
        out.push(Component {
            label,
            pixels,
            bbox,
        });
    }
    out
}

fn bounding_box(pixels: &[(u32, u32)]) -> BoundingBox {
    let mut b = BoundingBox {
        xmin: u32::MAX,
        ymin: u32::MAX,
        xmax: 0,
        ymax: 0,
    };
    for &(x, y) in pixels {
        b.xmin = b.xmin.min(x);
        b.ymin = b.ymin.min(y);
        b.xmax = b.xmax.max(x);
        b.ymax = b.ymax.max(y);
    }
    b
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: (f64, f64),
    /// Half extent along the long axis.
    pub half_length: f64,
    /// Half extent along the short axis.
    pub half_width: f64,
    /// Direction of the long axis in degrees, in `(-90, 90]`, measured from
    /// the image x axis towards the image y axis.
    pub angle_deg: f64,
}

impl OrientedRect {
    pub fn area(&self) -> f64 {
        4.0 * self.half_length * self.half_width
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (c, s) = (
            self.angle_deg.to_radians().cos(),
            self.angle_deg.to_radians().sin(),
        );
        let (a, b) = (self.half_length, self.half_width);
        let (cx, cy) = self.center;
        [(a, b), (-a, b), (-a, -b), (a, -b)].map(|(u, v)| (cx + u * c - v * s, cy + u * s + v * c))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (
            self.angle_deg.to_radians().cos(),
            self.angle_deg.to_radians().sin(),
        );
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.half_length && v.abs() <= self.half_width
    }
}

/// A connected region with its shape and contrast attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    #[serde(skip)]
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    pub centroid: (f64, f64),
    pub bbox: BoundingBox,
    pub local_contrast: f64,
    pub perimeter: f64,
    pub compactness: f64,
    pub rectangularity: f64,
    pub mbr: OrientedRect,
    #[serde(skip)]
    pub hull: Vec<(f64, f64)>,
    /// The region touches the image border; attributes describe the visible part.
    pub clipped: bool,
}

impl Region {
    pub const CSV_HEADER: &'static str =
        "label,area,centroid_x,centroid_y,local_contrast,compactness,rectangularity,mbr_angle_deg";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.label,
            self.area,
            self.centroid.0,
            self.centroid.1,
            self.local_contrast,
            self.compactness,
            self.rectangularity,
            self.mbr.angle_deg
        )
    }
}

/// Computes region attributes, measuring local contrast on `filtered`.
pub fn region_attributes(component: &Component, filtered: &GrayImage) -> Region {
    let (w, h) = (filtered.width(), filtered.height());
    let px = &component.pixels;
    let area = px.len();
    let (sx, sy) = px
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let centroid = (sx / area as f64, sy / area as f64);
    let bbox = component.bbox;
    let clipped = bbox.xmin == 0
        || bbox.ymin == 0
        || bbox.xmax as usize == w - 1
        || bbox.ymax as usize == h - 1;

    let local_contrast = local_contrast(component, filtered);
    let perimeter = traced_perimeter(component);
    let compactness = if perimeter > 0.0 {
        (4.0 * PI * area as f64 / (perimeter * perimeter)).min(MAX_COMPACTNESS)
    } else {
        MAX_COMPACTNESS
    };

    let hull = convex_hull(px.iter().map(|&(x, y)| (x as f64, y as f64)).collect());
    let mbr = min_area_rect(&hull);
    // thin or tiny regions have a degenerate center hull; the clamp covers them
    let rectangularity = (area as f64 / mbr.area()).min(1.0);

    Region {
        label: component.label,
        pixels: component.pixels.clone(),
        area,
        centroid,
        bbox,
        local_contrast,
        perimeter,
        compactness,
        rectangularity,
        mbr,
        hull,
        clipped,
    }
}

/// |mean over region - mean over the surrounding ring|, the ring being the
/// region dilated by `CONTRAST_RING_WIDTH` pixels minus the region itself.
fn local_contrast(component: &Component, filtered: &GrayImage) -> f64 {
    let (w, h) = (filtered.width(), filtered.height());
    let r = CONTRAST_RING_WIDTH;
    let b = component.bbox;
    let x0 = (b.xmin as usize).saturating_sub(r);
    let y0 = (b.ymin as usize).saturating_sub(r);
    let x1 = (b.xmax as usize + r).min(w - 1);
    let y1 = (b.ymax as usize + r).min(h - 1);
    let (lw, lh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut local = GrayImage::new(lw, lh, 0);
    for &(x, y) in &component.pixels {
        local.set(x as usize - x0, y as usize - y0, 255);
    }
    let grown = morphology::dilate(&local, WindowSize::new(2 * r + 1).expect("odd"));
    let (mut inner, mut n_inner, mut ring, mut n_ring) = (0.0, 0usize, 0.0, 0usize);
    for ly in 0..lh {
        for lx in 0..lw {
            let v = filtered.get(lx + x0, ly + y0) as f64;
            if local.get(lx, ly) > 0 {
                inner += v;
                n_inner += 1;
            } else if grown.get(lx, ly) > 0 {
                ring += v;
                n_ring += 1;
            }
        }
    }
    let mean_inner = inner / n_inner as f64;
    let mean_ring = if n_ring > 0 {
        ring / n_ring as f64
    } else {
        0.0
    };
    (mean_inner - mean_ring).abs()
}

/// Length of the outer boundary traced through pixel centers (Moore
/// neighbour tracing), axis steps 1 and diagonal steps sqrt(2).
fn traced_perimeter(component: &Component) -> f64 {
    if component.pixels.len() < 2 {
        return 0.0;
    }
    let b = component.bbox;
    // local grid with a one-pixel background margin
    let (lw, lh) = (b.width() as i32 + 2, b.height() as i32 + 2);
    let mut grid = vec![false; (lw * lh) as usize];
    for &(x, y) in &component.pixels {
        let lx = x as i32 - b.xmin as i32 + 1;
        let ly = y as i32 - b.ymin as i32 + 1;
        grid[(ly * lw + lx) as usize] = true;
    }
    let at = |x: i32, y: i32| grid[(y * lw + x) as usize];

    // clockwise (y down) starting west
    const DIRS: [(i32, i32); 8] = [
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
    ];
    let (fx, fy) = component.pixels[0];
    let start = (fx as i32 - b.xmin as i32 + 1, fy as i32 - b.ymin as i32 + 1);

    // The first raster pixel has a background western neighbour.
    let mut current = start;
    let mut backtrack_dir = 0usize; // direction from current to its backtrack pixel
    let mut length = 0.0;
    let mut first_move: Option<((i32, i32), (i32, i32))> = None;
    let max_steps = 8 * component.pixels.len() + 16;
    for _ in 0..max_steps {
        let mut next = None;
        for i in 1..=8 {
            let d = (backtrack_dir + i) % 8;
            let cand = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
            if at(cand.0, cand.1) {
                // the pixel examined just before the hit becomes the new backtrack
                let prev = (backtrack_dir + i - 1) % 8;
                let bt = (current.0 + DIRS[prev].0, current.1 + DIRS[prev].1);
                next = Some((cand, bt));
                break;
            }
        }
        let Some((cand, bt)) = next else {
            break;
        };
        if let Some(fm) = first_move {
            if (current, cand) == fm {
                break;
            }
        } else {
            first_move = Some((current, cand));
        }
        let (dx, dy) = (cand.0 - current.0, cand.1 - current.1);
        length += if dx != 0 && dy != 0 {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        backtrack_dir = DIRS
            .iter()
            .position(|&d| d == (bt.0 - cand.0, bt.1 - cand.1))
            .expect("backtrack pixel is a neighbour");
        current = cand;
    }
    length
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain. Returns hull vertices counter-clockwise in a
/// y-up sense, without collinear points.
pub fn convex_hull(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rectangle of a convex polygon. One side of the
/// optimum is collinear with a hull edge, so every edge direction is tried.
/// The axis-aligned direction is always a candidate as well.
pub fn min_area_rect(hull: &[(f64, f64)]) -> OrientedRect {
    assert!(!hull.is_empty());
    let mut dirs: Vec<(f64, f64)> = vec![(1.0, 0.0)];
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let (ex, ey) = (q.0 - p.0, q.1 - p.1);
        let len = ex.hypot(ey);
        if len > 0.0 {
            dirs.push((ex / len, ey / len));
        }
    }
    let mut best: Option<(f64, OrientedRect)> = None;
    for (ux, uy) in dirs {
        let (mut umin, mut umax, mut vmin, mut vmax) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in hull {
            let u = x * ux + y * uy;
            let v = -x * uy + y * ux;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let (du, dv) = ((umax - umin) / 2.0, (vmax - vmin) / 2.0);
        let area = 4.0 * du * dv;
        if best.as_ref().is_some_and(|(a, _)| *a <= area + 1e-12) {
            continue;
        }
        let (uc, vc) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
        let center = (uc * ux - vc * uy, uc * uy + vc * ux);
        let (half_length, half_width, angle) = if du >= dv {
            (du, dv, uy.atan2(ux).to_degrees())
        } else {
            (dv, du, ux.atan2(-uy).to_degrees())
        };
        best = Some((
            area,
            OrientedRect {
                center,
                half_length,
                half_width,
                angle_deg: normalize_axis_angle(angle),
            },
        ));
    }
    best.map(|(_, r)| r).expect("at least one direction")
}

/// Folds an axis direction (defined modulo 180 degrees) into `(-90, 90]`.
fn normalize_axis_angle(mut a: f64) -> f64 {
    while a > 90.0 {
        a -= 180.0;
    }
    while a <= -90.0 {
        a += 180.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist_from(pairs: &[(usize, u64)]) -> Histogram {
        let mut h = Histogram::default();
        for &(b, c) in pairs {
            h.counts[b] = c;
        }
        h
    }

    fn component_from(pixels: &[(u32, u32)]) -> Component {
        let mut pixels = pixels.to_vec();
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        Component {
            label: 1,
            bbox: bounding_box(&pixels),
            pixels,
        }
    }

    /// Exhaustive scan of the 255 candidate levels; independent of the
    /// cumulative-sum implementation.
    fn brute_force_level(h: &Histogram, method: ThresholdMethod) -> u8 {
        let mut vals = vec![None; 256];
        for t in 1..=255usize {
            let (lo, hi) = (&h.counts[..t], &h.counts[t..]);
            let (n0, n1): (u64, u64) = (lo.iter().sum(), hi.iter().sum());
            if n0 == 0 || n1 == 0 {
                continue;
            }
            let v = match method {
                ThresholdMethod::Otsu => {
                    let n = (n0 + n1) as f64;
                    let m0 = lo
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| i as f64 * c as f64)
                        .sum::<f64>()
                        / n0 as f64;
                    let m1 = hi
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| (i + t) as f64 * c as f64)
                        .sum::<f64>()
                        / n1 as f64;
                    (n0 as f64 / n) * (n1 as f64 / n) * (m0 - m1).powi(2)
                }
                ThresholdMethod::MaxEntropy => {
                    let ent = |cls: &[u64], n: u64| -> f64 {
                        cls.iter()
                            .filter(|&&c| c > 0)
                            .map(|&c| {
                                let q = c as f64 / n as f64;
                                -q * q.ln()
                            })
                            .sum()
                    };
                    ent(lo, n0) + ent(hi, n1)
                }
            };
            vals[t] = Some(v);
        }
        let best = vals
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let near = |t: usize| {
            vals[t].is_some_and(|v: f64| (v - best).abs() <= 1e-9 * best.abs().max(1e-12))
        };
        let lo = (1..=255).find(|&t| near(t)).unwrap();
        let mut hi = lo;
        while hi < 255 && near(hi + 1) {
            hi += 1;
        }
        ((lo + hi) / 2) as u8
    }

    #[test]
    fn two_delta_histogram_plateau_midpoint() {
        let h = hist_from(&[(50, 100), (200, 100)]);
        assert_eq!(brute_force_level(&h, ThresholdMethod::Otsu), 125);
        assert_eq!(brute_force_level(&h, ThresholdMethod::MaxEntropy), 125);
        assert_eq!(threshold(&h, ThresholdMethod::Otsu).unwrap(), 125);
        assert_eq!(threshold(&h, ThresholdMethod::MaxEntropy).unwrap(), 125);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let h = hist_from(&[(77, 400)]);
        for m in [ThresholdMethod::Otsu, ThresholdMethod::MaxEntropy] {
            assert_eq!(
                threshold(&h, m).unwrap_err(),
                SegmentationError::DegenerateHistogram { occupied: 1 }
            );
        }
    }

    #[test]
    fn binarize_levels() {
        let img = GrayImage::from_vec(4, 1, vec![0, 1, 255, 1]).unwrap();
        assert!(binarize(&img, 255).is_empty());
        assert_eq!(binarize(&img, 0).bits(), &[false, true, true, true]);
    }

    #[test]
    fn labelling_connectivity() {
        assert!(label_regions(&BinaryImage::new(5, 5)).is_empty());

        let mut m = BinaryImage::new(5, 5);
        m.set(1, 1, true);
        m.set(2, 2, true);
        assert_eq!(label_regions(&m).len(), 1);

        let mut m = BinaryImage::new(8, 3);
        m.set(0, 1, true);
        m.set(1, 1, true);
        m.set(4, 1, true);
        m.set(5, 1, true);
        let regions = label_regions(&m);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].label, 1);
        assert_eq!(regions[0].pixels, vec![(0, 1), (1, 1)]);
        assert_eq!(regions[1].label, 2);
    }

    #[test]
    fn labels_follow_raster_order_of_first_pixel() {
        let mut m = BinaryImage::new(6, 6);
        // a U shape whose right arm starts first in raster order
        for y in 0..4 {
            m.set(4, y, true);
        }
        for y in 2..4 {
            m.set(0, y, true);
        }
        m.set(1, 4, true);
        m.set(2, 5, true);
        m.set(3, 4, true);
        m.set(5, 5, true);
        let regions = label_regions(&m);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].pixels[0], (4, 0));
        assert!(regions[0].pixels.contains(&(0, 2)));
        assert_eq!(regions[1].pixels, vec![(5, 5)]);
    }

    #[test]
    fn filled_rectangle_is_its_own_mbr() {
        let px: Vec<_> = (0..10)
            .flat_map(|x| (0..20).map(move |y| (x + 5, y + 5)))
            .collect();
        let r = region_attributes(&component_from(&px), &GrayImage::new(40, 40, 0));
        assert!((r.rectangularity - 1.0).abs() < 1e-12);
        assert!((r.mbr.area() - 171.0).abs() < 1e-9);
        assert!((r.mbr.angle_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn plus_pentomino_rectangularity() {
        // the center hull is a diamond of area 2, so the ratio saturates
        let px = [(5, 4), (4, 5), (5, 5), (6, 5), (5, 6)];
        let r = region_attributes(&component_from(&px), &GrayImage::new(12, 12, 0));
        assert!((r.mbr.area() - 2.0).abs() < 1e-12);
        assert!((r.mbr.angle_deg.abs() - 45.0).abs() < 1e-9);
        assert_eq!(r.rectangularity, 1.0);
    }

    #[test]
    fn disk_compactness_near_one() {
        // a lattice-centered disk has one-pixel nubs at its four poles and
        // scores about 0.908; any off-lattice center avoids them
        let (cx, cy, rad) = (30.3, 29.6, 20.0);
        let px: Vec<_> = (0..61u32)
            .flat_map(|y| (0..61u32).map(move |x| (x, y)))
            .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= rad * rad)
            .collect();
        let r = region_attributes(&component_from(&px), &GrayImage::new(70, 70, 0));
        assert!((0.92..=1.05).contains(&r.compactness), "{}", r.compactness);
        assert!((r.centroid.0 - cx).abs() < 0.05 && (r.centroid.1 - cy).abs() < 0.05);
    }

    #[test]
    fn perimeter_of_square_and_line() {
        let px: Vec<_> = (0..4u32)
            .flat_map(|x| (0..4u32).map(move |y| (x + 2, y + 2)))
            .collect();
        let r = region_attributes(&component_from(&px), &GrayImage::new(10, 10, 0));
        assert!((r.perimeter - 12.0).abs() < 1e-12);
        let line: Vec<_> = (0..5u32).map(|x| (x + 2, 3)).collect();
        let r = region_attributes(&component_from(&line), &GrayImage::new(10, 10, 0));
        assert!((r.perimeter - 8.0).abs() < 1e-12);
        let diag: Vec<_> = (0..4u32).map(|i| (i + 2, i + 2)).collect();
        let r = region_attributes(&component_from(&diag), &GrayImage::new(10, 10, 0));
        assert!((r.perimeter - 6.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn local_contrast_is_mean_difference() {
        let mut filtered = GrayImage::new(30, 30, 0);
        let mut px = Vec::new();
        for y in 10..16 {
            for x in 10..16 {
                filtered.set(x, y, 60);
                px.push((x as u32, y as u32));
            }
        }
        let r = region_attributes(&component_from(&px), &filtered);
        assert!((r.local_contrast - 60.0).abs() < 1e-12);
        assert!(!r.clipped);
    }

    #[test]
    fn border_region_is_clipped() {
        let px = [(0, 3), (1, 3), (0, 4)];
        let r = region_attributes(&component_from(&px), &GrayImage::new(8, 8, 0));
        assert!(r.clipped);
    }

    #[test]
    fn rotated_rect_angle() {
        let rect = OrientedRect {
            center: (40.0, 40.0),
            half_length: 15.0,
            half_width: 6.0,
            angle_deg: 30.0,
        };
        let px: Vec<_> = (0..80u32)
            .flat_map(|y| (0..80u32).map(move |x| (x, y)))
            .filter(|&(x, y)| rect.contains(x as f64, y as f64))
            .collect();
        let r = region_attributes(&component_from(&px), &GrayImage::new(80, 80, 0));
        assert!((r.mbr.angle_deg - 30.0).abs() < 3.0, "{}", r.mbr.angle_deg);
    }

    proptest! {
        #[test]
        fn thresholds_shift_with_histogram(
            bins in proptest::collection::vec((0usize..150, 1u64..500), 2..12),
            shift in 1usize..100,
        ) {
            let mut h = Histogram::default();
            for &(b, c) in &bins { h.counts[b] += c; }
            prop_assume!(h.occupied_bins() >= 2);
            let mut shifted = Histogram::default();
            for b in 0..150 { shifted.counts[b + shift] = h.counts[b]; }
            for m in [ThresholdMethod::Otsu, ThresholdMethod::MaxEntropy] {
                let a = threshold(&h, m).unwrap();
                let b = threshold(&shifted, m).unwrap();
                prop_assert_eq!(b as usize, a as usize + shift);
            }
        }

        #[test]
        fn threshold_matches_exhaustive_scan(
            bins in proptest::collection::vec((0usize..256, 1u64..1000), 2..20),
        ) {
            let mut h = Histogram::default();
            for &(b, c) in &bins { h.counts[b] += c; }
            prop_assume!(h.occupied_bins() >= 2);
            for m in [ThresholdMethod::Otsu, ThresholdMethod::MaxEntropy] {
                prop_assert_eq!(threshold(&h, m).unwrap(), brute_force_level(&h, m));
            }
        }

        #[test]
        fn areas_partition_foreground(bits in proptest::collection::vec(any::<bool>(), 24 * 24)) {
            let mask = BinaryImage::from_vec(24, 24, bits).unwrap();
            let regions = label_regions(&mask);
            let total: usize = regions.iter().map(|r| r.pixels.len()).sum();
            prop_assert_eq!(total, mask.count());
            for (i, r) in regions.iter().enumerate() {
                prop_assert_eq!(r.label as usize, i + 1);
            }
        }

        #[test]
        fn mbr_bounds(bits in proptest::collection::vec(any::<bool>(), 16 * 16)) {
            let mask = BinaryImage::from_vec(16, 16, bits).unwrap();
            let img = GrayImage::new(16, 16, 0);
            for c in label_regions(&mask) {
                let r = region_attributes(&c, &img);
                prop_assert!(r.rectangularity <= 1.0 && r.rectangularity > 0.0);
                prop_assert!(r.compactness > 0.0 && r.compactness <= MAX_COMPACTNESS);
                let aabb = (r.bbox.width() * r.bbox.height()) as f64;
                prop_assert!(r.mbr.area() <= aabb + 1e-9);
                prop_assert!(r.bbox.contains(r.centroid.0, r.centroid.1));
            }
        }

        #[test]
        fn rasterized_mbr_is_rectangular(
            hl in 10.0f64..30.0, hw in 10.0f64..20.0, angle in -89.0f64..90.0,
        ) {
            let rect = OrientedRect { center: (50.3, 49.7), half_length: hl, half_width: hw, angle_deg: angle };
            let px: Vec<_> = (0..100u32)
                .flat_map(|y| (0..100u32).map(move |x| (x, y)))
                .filter(|&(x, y)| rect.contains(x as f64, y as f64))
                .collect();
            let r = region_attributes(&component_from(&px), &GrayImage::new(100, 100, 0));
            prop_assert!(r.rectangularity >= 0.95, "rectangularity {}", r.rectangularity);
        }

        #[test]
        fn label_count_translation_invariant(
            blobs in proptest::collection::vec((0u32..6, 0u32..6), 1..6), dx in 0u32..4, dy in 0u32..4,
        ) {
            let build = |ox: u32, oy: u32| {
                let mut m = BinaryImage::new(40, 40);
                for &(bx, by) in &blobs {
                    for i in 0..2 { for j in 0..2 {
                        m.set((2 + bx * 5 + i + ox) as usize, (2 + by * 5 + j + oy) as usize, true);
                    }}
                }
                m
            };
            prop_assert_eq!(label_regions(&build(0, 0)).len(), label_regions(&build(dx, dy)).len());
        }
    }
}
