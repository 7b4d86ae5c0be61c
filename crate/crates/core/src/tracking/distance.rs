use crate::image::BinaryImage;

/// Value of every pixel when the mask holds no edge at all.
pub const UNREACHABLE_DISTANCE: f32 = 1.0e6;

/// Per-pixel distance (pixels) to the nearest edge pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; `None` outside the
    /// pixel-center lattice.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let v = |xx: usize, yy: usize| self.values[yy * self.width + xx] as f64;
        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Two-pass 3-4 chamfer distance transform, scaled so axis steps count 1.
pub fn distance_transform(mask: &BinaryImage) -> DistanceField {
    nearest_edge_transform(mask).0
}

/// Marker for pixels with no edge anywhere in the mask.
pub const NO_EDGE: u32 = u32::MAX;

/// Chamfer transform that also carries, per pixel, the raster index of the
/// edge pixel its distance was propagated from.
pub fn nearest_edge_transform(mask: &BinaryImage) -> (DistanceField, Vec<u32>) {
    let (w, h) = (mask.width(), mask.height());
    if mask.is_empty() {
        let field = DistanceField {
            width: w,
            height: h,
            values: vec![UNREACHABLE_DISTANCE; w * h],
        };
        return (field, vec![NO_EDGE; w * h]);
    }
    const INF: u32 = u32::MAX / 4;
    let mut d: Vec<u32> = mask
        .bits()
        .iter()
        .map(|&b| if b { 0 } else { INF })
        .collect();
    let mut nearest: Vec<u32> = (0..w * h)
        .map(|i| if mask.bits()[i] { i as u32 } else { NO_EDGE })
        .collect();
    let forward: [(isize, isize, u32); 4] = [(-1, 0, 3), (-1, -1, 4), (0, -1, 3), (1, -1, 4)];
    let backward: [(isize, isize, u32); 4] = [(1, 0, 3), (1, 1, 4), (0, 1, 3), (-1, 1, 4)];
    let relax = |d: &mut Vec<u32>,
                 nearest: &mut Vec<u32>,
                 x: usize,
                 y: usize,
                 offsets: &[(isize, isize, u32); 4]| {
        let i = y * w + x;
        let (mut best, mut from) = (d[i], nearest[i]);
        for &(dx, dy, cost) in offsets {
            let (qx, qy) = (x as isize + dx, y as isize + dy);
            if qx >= 0 && qy >= 0 && qx < w as isize && qy < h as isize {
                let q = qy as usize * w + qx as usize;
                if d[q] + cost < best {
                    best = d[q] + cost;
                    from = nearest[q];
                }
            }
        }
        d[i] = best;
        nearest[i] = from;
    };
    for y in 0..h {
        for x in 0..w {
            relax(&mut d, &mut nearest, x, y, &forward);
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            relax(&mut d, &mut nearest, x, y, &backward);
        }
    }
    let field = DistanceField {
        width: w,
        height: h,
        values: d.into_iter().map(|v| v as f32 / 3.0).collect(),
    };
    (field, nearest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_pixel() {
        let mut m = BinaryImage::new(11, 11);
        m.set(5, 5, true);
        let d = distance_transform(&m);
        assert_eq!(d.get(5, 5), 0.0);
        assert_eq!(d.get(10, 5), 5.0);
        assert_eq!(d.get(0, 5), 5.0);
        assert!((d.get(6, 6) - 4.0 / 3.0).abs() < 1e-6);
        assert!((d.get(7, 6) - 7.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn empty_mask_is_unreachable() {
        let d = distance_transform(&BinaryImage::new(4, 3));
        assert!(d.values().iter().all(|&v| v == UNREACHABLE_DISTANCE));
    }

    #[test]
    fn bilinear_sampling_between_columns() {
        let mut m = BinaryImage::new(10, 3);
        for y in 0..3 {
            m.set(4, y, true);
        }
        let d = distance_transform(&m);
        assert!((d.sample(4.25, 1.0).unwrap() - 0.25).abs() < 1e-9);
        assert!((d.sample(2.5, 1.5).unwrap() - 1.5).abs() < 1e-9);
        assert!(d.sample(-0.1, 1.0).is_none());
        assert!(d.sample(9.5, 1.0).is_none());
    }

    #[test]
    fn nearest_index_points_at_an_edge() {
        let mut m = BinaryImage::new(9, 7);
        m.set(1, 1, true);
        m.set(7, 5, true);
        let (d, nearest) = nearest_edge_transform(&m);
        assert_eq!(nearest[0], 10);
        assert_eq!(nearest[6 * 9 + 8], 5 * 9 + 7);
        assert_eq!(d.get(1, 1), 0.0);
    }

    proptest! {
        #[test]
        fn neighbour_differences_are_bounded(bits in proptest::collection::vec(proptest::bool::weighted(0.03), 20 * 20)) {
            let m = BinaryImage::from_vec(20, 20, bits).unwrap();
            let d = distance_transform(&m);
            for y in 0..20 {
                for x in 0..20 {
                    if m.get(x, y) { prop_assert_eq!(d.get(x, y), 0.0); }
                    for (dx, dy) in [(1usize, 0usize), (0, 1), (1, 1)] {
                        if x + dx < 20 && y + dy < 20 {
                            let diff = (d.get(x, y) - d.get(x + dx, y + dy)).abs();
                            prop_assert!(diff <= 4.0 / 3.0 + 1e-5);
                        }
                    }
                }
            }
        }
    }
}
