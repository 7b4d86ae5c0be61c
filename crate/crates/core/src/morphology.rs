//! Flat grayscale morphology on square windows and geodesic reconstruction.
//!
//! Erosion and dilation replicate the image border. Reconstruction uses the
//! 8-neighbourhood. Its contract is the iterate-to-stability definition
//!
//! ```text
//! bright objects: m <- min(dilate(m, 3), mask)   until stable, marker <= mask
//! dark objects:   m <- max(erode(m, 3), mask)    until stable, marker >= mask
//! ```
//!
//! which is computed here with Vincent's hybrid raster/FIFO algorithm.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphologyError {
    #[error("window size must be odd and >= 1, got {0}")]
    InvalidWindow(usize),
    #[error("marker/mask ordering violated at pixel ({x}, {y}): marker {marker}, mask {mask}")]
    Ordering {
        x: usize,
        y: usize,
        marker: u8,
        mask: u8,
    },
    #[error("marker is {marker_w}x{marker_h} but mask is {mask_w}x{mask_h}")]
    ShapeMismatch {
        marker_w: usize,
        marker_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
}

/// Side of a square structuring window; always odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct WindowSize(usize);

impl WindowSize {
    pub const UNIT: WindowSize = WindowSize(3);

    pub fn new(k: usize) -> Result<Self, MorphologyError> {
        if k >= 1 && k % 2 == 1 {
            Ok(Self(k))
        } else {
            Err(MorphologyError::InvalidWindow(k))
        }
    }

    /// Smallest odd window with side at least `side` pixels.
    pub fn covering(side: f64) -> Self {
        let k = side.ceil().max(1.0) as usize;
        Self(if k.is_multiple_of(2) { k + 1 } else { k })
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn radius(self) -> usize {
        self.0 / 2
    }
}

impl TryFrom<usize> for WindowSize {
    type Error = MorphologyError;
    fn try_from(k: usize) -> Result<Self, Self::Error> {
        Self::new(k)
    }
}

impl From<WindowSize> for usize {
    fn from(w: WindowSize) -> usize {
        w.0
    }
}

/// Contrast sign of the structures a filter extracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    DarkObjects,
    BrightObjects,
}

#[derive(Clone, Copy)]
enum Extremum {
    Max,
    Min,
}

impl Extremum {
    #[inline]
    fn pick(self, a: u8, b: u8) -> u8 {
        match self {
            Extremum::Max => a.max(b),
            Extremum::Min => a.min(b),
        }
    }
}

/// Sliding extremum over a window of `k` samples centered on each element of
/// `line`, replicating the end samples. van Herk / Gil-Werman, O(n) in `k`.
fn sliding_extremum(line: &[u8], k: usize, op: Extremum, out: &mut [u8], scratch: &mut Scratch) {
    let n = line.len();
    let r = k / 2;
    if k == 1 {
        out.copy_from_slice(line);
        return;
    }
    let padded_len = n + 2 * r;
    scratch.padded.clear();
    scratch.padded.extend(std::iter::repeat_n(line[0], r));
    scratch.padded.extend_from_slice(line);
    scratch.padded.extend(std::iter::repeat_n(line[n - 1], r));
    let p = &scratch.padded;

    scratch.prefix.resize(padded_len, 0);
    scratch.suffix.resize(padded_len, 0);
    let (g, h) = (&mut scratch.prefix, &mut scratch.suffix);
    for start in (0..padded_len).step_by(k) {
        let end = (start + k).min(padded_len);
        g[start] = p[start];
        for i in start + 1..end {
            g[i] = op.pick(g[i - 1], p[i]);
        }
        h[end - 1] = p[end - 1];
        for i in (start..end - 1).rev() {
            h[i] = op.pick(h[i + 1], p[i]);
        }
    }
    // window for output i covers padded[i ..= i + k - 1]
    for (i, o) in out.iter_mut().enumerate() {
        *o = op.pick(h[i], g[i + k - 1]);
    }
}

#[derive(Default)]
struct Scratch {
    padded: Vec<u8>,
    prefix: Vec<u8>,
    suffix: Vec<u8>,
}

fn square_filter(image: &GrayImage, k: WindowSize, op: Extremum) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let k = k.get();
    if k == 1 {
        return image.clone();
    }
    let mut scratch = Scratch::default();
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        let src = &image.pixels()[y * w..(y + 1) * w];
        sliding_extremum(src, k, op, &mut rows[y * w..(y + 1) * w], &mut scratch);
    }
    let mut out = GrayImage::new(w, h, 0);
    let mut column = vec![0u8; h];
    let mut col_out = vec![0u8; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = rows[y * w + x];
        }
        sliding_extremum(&column, k, op, &mut col_out, &mut scratch);
        let px = out.pixels_mut();
        for y in 0..h {
            px[y * w + x] = col_out[y];
        }
    }
    out
}

/// Maximum over the `k`x`k` window centered on each pixel.
pub fn dilate(image: &GrayImage, k: WindowSize) -> GrayImage {
    square_filter(image, k, Extremum::Max)
}

/// Minimum over the `k`x`k` window centered on each pixel.
pub fn erode(image: &GrayImage, k: WindowSize) -> GrayImage {
    square_filter(image, k, Extremum::Min)
}

fn invert(image: &GrayImage) -> GrayImage {
    let mut out = image.clone();
    out.pixels_mut().iter_mut().for_each(|p| *p = 255 - *p);
    out
}

/// Geodesic reconstruction of `mask` from `marker`.
///
/// `BrightObjects` is reconstruction by dilation (`marker <= mask`),
/// `DarkObjects` reconstruction by erosion (`marker >= mask`).
pub fn reconstruct(
    marker: &GrayImage,
    mask: &GrayImage,
    polarity: Polarity,
) -> Result<GrayImage, MorphologyError> {
    if !marker.same_shape(mask) {
        return Err(MorphologyError::ShapeMismatch {
            marker_w: marker.width(),
            marker_h: marker.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    let violates = |m: u8, k: u8| match polarity {
        Polarity::BrightObjects => m > k,
        Polarity::DarkObjects => m < k,
    };
    let w = marker.width();
    if let Some(i) = marker
        .pixels()
        .iter()
        .zip(mask.pixels())
        .position(|(&m, &k)| violates(m, k))
    {
        return Err(MorphologyError::Ordering {
            x: i % w,
            y: i / w,
            marker: marker.pixels()[i],
            mask: mask.pixels()[i],
        });
    }
    Ok(match polarity {
        Polarity::BrightObjects => reconstruct_by_dilation(marker, mask),
        Polarity::DarkObjects => invert(&reconstruct_by_dilation(&invert(marker), &invert(mask))),
    })
}

/// Vincent (1993) hybrid algorithm; assumes `marker <= mask`.
fn reconstruct_by_dilation(marker: &GrayImage, mask: &GrayImage) -> GrayImage {
    let (w, h) = (marker.width() as isize, marker.height() as isize);
    let mut j = marker.clone().into_vec();
    let m = mask.pixels();
    let idx = |x: isize, y: isize| (y * w + x) as usize;
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;

    const PREV: [(isize, isize); 4] = [(-1, 0), (-1, -1), (0, -1), (1, -1)];
    const NEXT: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];

    for y in 0..h {
        for x in 0..w {
            let p = idx(x, y);
            let mut v = j[p];
            for (dx, dy) in PREV {
                let (qx, qy) = (x + dx, y + dy);
                if inside(qx, qy) {
                    v = v.max(j[idx(qx, qy)]);
                }
            }
            j[p] = v.min(m[p]);
        }
    }

    let mut fifo = VecDeque::new();
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let p = idx(x, y);
            let mut v = j[p];
            for (dx, dy) in NEXT {
                let (qx, qy) = (x + dx, y + dy);
                if inside(qx, qy) {
                    v = v.max(j[idx(qx, qy)]);
                }
            }
            let v = v.min(m[p]);
            j[p] = v;
            let needs_propagation = NEXT.iter().any(|&(dx, dy)| {
                let (qx, qy) = (x + dx, y + dy);
                inside(qx, qy) && {
                    let q = idx(qx, qy);
                    j[q] < v && j[q] < m[q]
                }
            });
            if needs_propagation {
                fifo.push_back((x, y));
            }
        }
    }

    while let Some((x, y)) = fifo.pop_front() {
        let p = idx(x, y);
        for (dx, dy) in PREV.iter().chain(NEXT.iter()) {
            let (qx, qy) = (x + dx, y + dy);
            if !inside(qx, qy) {
                continue;
            }
            let q = idx(qx, qy);
            if j[q] < j[p] && m[q] != j[q] {
                j[q] = j[p].min(m[q]);
                fifo.push_back((qx, qy));
            }
        }
    }

    GrayImage::from_vec(w as usize, h as usize, j).expect("shape preserved")
}

/// Dilation followed by reconstruction by erosion: removes dark structures
/// that fit inside the window and leaves everything else untouched.
pub fn closing_by_reconstruction(image: &GrayImage, k: WindowSize) -> GrayImage {
    reconstruct(&dilate(image, k), image, Polarity::DarkObjects).expect("dilation is extensive")
}

/// Erosion followed by reconstruction by dilation: the bright dual.
pub fn opening_by_reconstruction(image: &GrayImage, k: WindowSize) -> GrayImage {
    reconstruct(&erode(image, k), image, Polarity::BrightObjects)
        .expect("erosion is anti-extensive")
}

/// Top-hat by reconstruction, highlighting structures of the given polarity
/// smaller than the window.
pub fn tophat(image: &GrayImage, k: WindowSize, polarity: Polarity) -> GrayImage {
    let mut out = match polarity {
        Polarity::DarkObjects => closing_by_reconstruction(image, k),
        Polarity::BrightObjects => opening_by_reconstruction(image, k),
    };
    for (o, &p) in out.pixels_mut().iter_mut().zip(image.pixels()) {
        *o = match polarity {
            Polarity::DarkObjects => o.saturating_sub(p),
            Polarity::BrightObjects => p.saturating_sub(*o),
        };
    }
    out
}
