//! Synthetic frames of the client satellite against a star field, with
//! optional Earth-limb clutter and sensor noise, plus exact ground truth.
//!
//! Pixel `(x, y)` covers `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::measurement::{CameraAttitude, CameraModel};
use crate::tracking::{Pose2D, SatelliteGeometry};

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("timestamps must increase: {prev} then {next}")]
    NonMonotoneTime { prev: f64, next: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Star {
    pub x: f64,
    pub y: f64,
    /// Integrated signal above background, DN.
    pub flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StarField {
    /// Explicit stars, drawn in addition to the random ones.
    pub stars: Vec<Star>,
    pub count: usize,
    pub flux_min: f64,
    pub flux_max: f64,
    pub seed: u64,
}

impl Default for StarField {
    fn default() -> Self {
        Self {
            stars: Vec::new(),
            count: 0,
            flux_min: 100.0,
            flux_max: 1500.0,
            seed: 7,
        }
    }
}

impl StarField {
    fn realize(&self, width: usize, height: usize) -> Vec<Star> {
        let mut out = self.stars.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.count {
            let x = rng.random_range(-0.5..width as f64 - 0.5);
            let y = rng.random_range(-0.5..height as f64 - 0.5);
            let flux = if self.flux_max > self.flux_min {
                rng.random_range(self.flux_min..self.flux_max)
            } else {
                self.flux_min
            };
            out.push(Star { x, y, flux });
        }
        out
    }
}

/// Bright half-plane with a fractal value-noise texture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarthClutter {
    /// Direction from the image center towards the bright side, degrees.
    pub normal_deg: f64,
    /// Signed distance of the limb from the image center along the normal, px.
    pub offset_px: f64,
    pub level: f64,
    /// Peak deviation of the texture, DN.
    pub texture_amplitude: f64,
    /// Coarsest texture cell, px.
    pub texture_scale_px: f64,
    /// Amplitude ratio between successive texture octaves, in (0, 1).
    pub texture_roughness: f64,
    pub seed: u64,
}

impl Default for EarthClutter {
    fn default() -> Self {
        Self {
            normal_deg: 0.0,
            offset_px: 150.0,
            level: 140.0,
            texture_amplitude: 60.0,
            texture_scale_px: 32.0,
            texture_roughness: 0.8,
            seed: 11,
        }
    }
}

impl EarthClutter {
    fn signed_distance(&self, x: f64, y: f64, cam: &CameraModel) -> f64 {
        let (s, c) = self.normal_deg.to_radians().sin_cos();
        (x - cam.cx) * c + (y - cam.cy) * s - self.offset_px
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub camera: CameraModel,
    pub pose: Pose2D,
    pub geometry: SatelliteGeometry,
    pub body_intensity: f64,
    pub panel_intensity: f64,
    pub background: f64,
    pub stars: StarField,
    pub psf_sigma: f64,
    pub noise_sigma: f64,
    pub earth: Option<EarthClutter>,
    /// Render the satellite at all.
    pub target: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let camera = CameraModel::default();
        Self {
            pose: Pose2D::new(camera.cx, camera.cy, 10.0, 0.0),
            camera,
            geometry: SatelliteGeometry::default(),
            body_intensity: 200.0,
            panel_intensity: 170.0,
            background: 12.0,
            stars: StarField::default(),
            psf_sigma: 1.0,
            noise_sigma: 3.0,
            earth: None,
            target: true,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        self.camera
            .validate()
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
        for (name, v) in [
            ("body_intensity", self.body_intensity),
            ("panel_intensity", self.panel_intensity),
            ("background", self.background),
        ] {
            if !(0.0..=255.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 255], got {v}"));
            }
        }
        if !(self.psf_sigma > 0.0) {
            return bad(format!(
                "psf_sigma must be positive, got {}",
                self.psf_sigma
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        if self.target && !self.pose.is_valid() {
            return bad(format!("invalid target pose {:?}", self.pose));
        }
        if let Some(e) = &self.earth {
            if !(0.0..=255.0).contains(&e.level)
                || !(e.texture_amplitude >= 0.0)
                || !(e.texture_scale_px > 0.0)
                || !(e.texture_roughness > 0.0 && e.texture_roughness < 1.0)
            {
                return bad("earth clutter needs level in [0, 255], amplitude >= 0, scale > 0, roughness in (0, 1)".into());
            }
        }
        if self.stars.flux_min < 0.0 || self.stars.flux_max < self.stars.flux_min {
            return bad("star flux range must satisfy 0 <= flux_min <= flux_max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundTruth {
    pub pose: Pose2D,
    /// Image position of the body center.
    pub centroid: (f64, f64),
    pub apparent_diameter_px: f64,
    /// Distance along the boresight, meters.
    pub range_m: f64,
    /// Some part of the target falls inside the frame.
    pub in_frame: bool,
    /// The whole target falls inside the frame.
    pub fully_visible: bool,
}

impl GroundTruth {
    pub const CSV_HEADER: &'static str =
        "frame,t,tx,ty,s,theta_deg,centroid_x,centroid_y,apparent_diameter_px,range_m,in_frame";

    pub fn csv_row(&self, frame: usize, t: f64) -> String {
        let p = self.pose;
        format!(
            "{frame},{t:.3},{:.6},{:.6},{:.8},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            p.tx,
            p.ty,
            p.s,
            p.theta_deg,
            self.centroid.0,
            self.centroid.1,
            self.apparent_diameter_px,
            self.range_m,
            self.in_frame as u8
        )
    }
}

/// Image-space outline of the satellite at a pose.
#[derive(Debug, Clone, Copy)]
struct Silhouette {
    center: (f64, f64),
    radius: f64,
    panel_center: (f64, f64),
    axis: (f64, f64),
    half_length: f64,
    half_width: f64,
}

impl Silhouette {
    fn new(pose: &Pose2D, g: &SatelliteGeometry) -> Self {
        let (sn, cs) = pose.theta_deg.to_radians().sin_cos();
        Self {
            center: (pose.tx, pose.ty),
            radius: g.body_diameter_m / 2.0 * pose.s,
            panel_center: (
                pose.tx + cs * g.panel_offset_m * pose.s,
                pose.ty + sn * g.panel_offset_m * pose.s,
            ),
            axis: (cs, sn),
            half_length: g.panel_length_m / 2.0 * pose.s,
            half_width: g.panel_width_m / 2.0 * pose.s,
        }
    }

    fn in_body(&self, x: f64, y: f64) -> bool {
        (x - self.center.0).powi(2) + (y - self.center.1).powi(2) <= self.radius * self.radius
    }

    fn in_panel(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.panel_center.0, y - self.panel_center.1);
        let u = dx * self.axis.0 + dy * self.axis.1;
        let v = -dx * self.axis.1 + dy * self.axis.0;
        u.abs() <= self.half_length && v.abs() <= self.half_width
    }

    /// Distance beyond which a point is certainly outside, from the body center.
    fn reach(&self) -> f64 {
        let d = (self.panel_center.0 - self.center.0).hypot(self.panel_center.1 - self.center.1);
        self.radius.max(d + self.half_length.hypot(self.half_width))
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let r = self.reach();
        (
            self.center.0 - r,
            self.center.1 - r,
            self.center.0 + r,
            self.center.1 + r,
        )
    }

    /// Exact bounds of body and panel corners.
    fn tight_bounds(&self) -> (f64, f64, f64, f64) {
        let (mut x0, mut y0, mut x1, mut y1) = (
            self.center.0 - self.radius,
            self.center.1 - self.radius,
            self.center.0 + self.radius,
            self.center.1 + self.radius,
        );
        for (su, sv) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            let u = su * self.half_length;
            let v = sv * self.half_width;
            let x = self.panel_center.0 + u * self.axis.0 - v * self.axis.1;
            let y = self.panel_center.1 + u * self.axis.1 + v * self.axis.0;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        (x0, y0, x1, y1)
    }
}

/// Linear-intensity canvas before quantization.
#[derive(Debug, Clone)]
pub struct Radiance {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Radiance {
    fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            values: vec![v; width * height],
        }
    }

    pub fn quantize(&self) -> GrayImage {
        let px = self
            .values
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_vec(self.width, self.height, px).expect("canvas shape")
    }
}

/// Smoothly interpolated lattice noise summed over octaves, in [-1, 1].
struct ValueNoise {
    octaves: Vec<Octave>,
}

struct Octave {
    cell: f64,
    weight: f64,
    /// Lattice rotation, hides the axis-aligned cell structure.
    cos: f64,
    sin: f64,
    origin: f64,
    nx: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, scale: f64, roughness: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut octaves = Vec::new();
        let (mut cell, mut weight) = (scale, 1.0);
        let reach = (width as f64).hypot(height as f64);
        while cell >= 2.0 && octaves.len() < 5 {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let nx = (2.0 * reach / cell).ceil() as usize + 2;
            let lattice = (0..nx * nx).map(|_| rng.random_range(-1.0..1.0)).collect();
            octaves.push(Octave {
                cell,
                weight,
                cos: angle.cos(),
                sin: angle.sin(),
                origin: reach,
                nx,
                lattice,
            });
            cell /= 2.0;
            weight *= roughness;
        }
        Self { octaves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (mut sum, mut norm) = (0.0, 0.0);
        for o in &self.octaves {
            let u = o.cos * x - o.sin * y + o.origin;
            let v = o.sin * x + o.cos * y + o.origin;
            let (gx, gy) = (u.max(0.0) / o.cell, v.max(0.0) / o.cell);
            let (ix, iy) = (
                (gx.floor() as usize).min(o.nx - 2),
                (gy.floor() as usize).min(o.nx - 2),
            );
            let (fx, fy) = (
                smooth((gx - ix as f64).min(1.0)),
                smooth((gy - iy as f64).min(1.0)),
            );
            let l = |i: usize, j: usize| o.lattice[j * o.nx + i];
            let top = l(ix, iy) * (1.0 - fx) + l(ix + 1, iy) * fx;
            let bottom = l(ix, iy + 1) * (1.0 - fx) + l(ix + 1, iy + 1) * fx;
            sum += o.weight * (top * (1.0 - fy) + bottom * fy);
            norm += o.weight;
        }
        if norm > 0.0 {
            sum / norm
        } else {
            0.0
        }
    }
}

/// Fraction of a unit-flux Gaussian of width `sigma` centered at `mu`
/// falling in the pixel `[p - 0.5, p + 0.5]`.
fn pixel_fraction(p: f64, mu: f64, sigma: f64) -> f64 {
    let k = 1.0 / (sigma * std::f64::consts::SQRT_2);
    0.5 * (libm::erf((p + 0.5 - mu) * k) - libm::erf((p - 0.5 - mu) * k))
}

/// Half-size of the window a star is drawn into.
fn psf_reach(sigma: f64) -> f64 {
    (4.0 * sigma).ceil() + 1.0
}

fn add_star(canvas: &mut Radiance, star: &Star, sigma: f64) {
    let r = psf_reach(sigma);
    let x0 = (star.x - r).floor().max(0.0) as usize;
    let y0 = (star.y - r).floor().max(0.0) as usize;
    let x1 = ((star.x + r).ceil().max(0.0) as usize).min(canvas.width - 1);
    let y1 = ((star.y + r).ceil().max(0.0) as usize).min(canvas.height - 1);
    if star.x + r < 0.0 || star.y + r < 0.0 {
        return;
    }
    let fx: Vec<f64> = (x0..=x1)
        .map(|x| pixel_fraction(x as f64, star.x, sigma))
        .collect();
    for y in y0..=y1 {
        let fy = pixel_fraction(y as f64, star.y, sigma);
        for (i, x) in (x0..=x1).enumerate() {
            canvas.values[y * canvas.width + x] += star.flux * fx[i] * fy;
        }
    }
}

/// Renders everything except noise and quantization.
pub fn render_radiance(spec: &SceneSpec) -> Radiance {
    let cam = &spec.camera;
    let (w, h) = (cam.width, cam.height);
    let mut canvas = Radiance::filled(w, h, spec.background);
    let silhouette = spec
        .target
        .then(|| Silhouette::new(&spec.pose, &spec.geometry));

    if let Some(earth) = &spec.earth {
        let noise = ValueNoise::new(
            w,
            h,
            earth.texture_scale_px,
            earth.texture_roughness,
            earth.seed,
        );
        for y in 0..h {
            for x in 0..w {
                let d = earth.signed_distance(x as f64, y as f64, cam);
                let coverage = (d + 0.5).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let lit = earth.level + earth.texture_amplitude * noise.at(x as f64, y as f64);
                    let v = &mut canvas.values[y * w + x];
                    *v = *v * (1.0 - coverage) + lit * coverage;
                }
            }
        }
    }

    let occluder_margin = psf_reach(spec.psf_sigma) * std::f64::consts::SQRT_2 + 1.0;
    for star in spec.stars.realize(w, h) {
        let hidden_by_earth = spec
            .earth
            .as_ref()
            .is_some_and(|e| e.signed_distance(star.x, star.y, cam) > -occluder_margin);
        if !hidden_by_earth {
            add_star(&mut canvas, &star, spec.psf_sigma);
        }
    }

    if let Some(s) = silhouette {
        draw_target(
            &mut canvas,
            &s,
            spec.body_intensity - spec.background,
            spec.panel_intensity - spec.background,
        );
    }
    canvas
}

/// Adds the target's excess over the sky level, so target and stars
/// superpose linearly.
fn draw_target(canvas: &mut Radiance, s: &Silhouette, body: f64, panel: f64) {
    let (bx0, by0, bx1, by1) = s.bounds();
    let clip = |v: f64, n: usize| (v.max(0.0) as usize).min(n.saturating_sub(1));
    if bx1 < -0.5
        || by1 < -0.5
        || bx0 > canvas.width as f64 - 0.5
        || by0 > canvas.height as f64 - 0.5
    {
        return;
    }
    let (x0, x1) = (
        clip(bx0.floor(), canvas.width),
        clip(bx1.ceil(), canvas.width),
    );
    let (y0, y1) = (
        clip(by0.floor(), canvas.height),
        clip(by1.ceil(), canvas.height),
    );
    let n = SUPERSAMPLE as f64;
    let weight = 1.0 / (n * n);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (mut cb, mut cp) = (0.0, 0.0);
            for j in 0..SUPERSAMPLE {
                let sy = y as f64 - 0.5 + (j as f64 + 0.5) / n;
                for i in 0..SUPERSAMPLE {
                    let sx = x as f64 - 0.5 + (i as f64 + 0.5) / n;
                    if s.in_body(sx, sy) {
                        cb += weight;
                    } else if s.in_panel(sx, sy) {
                        cp += weight;
                    }
                }
            }
            if cb + cp > 0.0 {
                canvas.values[y * canvas.width + x] += body * cb + panel * cp;
            }
        }
    }
}

fn ground_truth(spec: &SceneSpec) -> GroundTruth {
    let cam = &spec.camera;
    let s = Silhouette::new(&spec.pose, &spec.geometry);
    let (x0, y0, x1, y1) = s.tight_bounds();
    let (lo_x, lo_y, hi_x, hi_y) = (-0.5, -0.5, cam.width as f64 - 0.5, cam.height as f64 - 0.5);
    let in_frame = spec.target && x1 > lo_x && y1 > lo_y && x0 < hi_x && y0 < hi_y;
    let fully_visible = spec.target && x0 >= lo_x && y0 >= lo_y && x1 <= hi_x && y1 <= hi_y;
    GroundTruth {
        pose: spec.pose,
        centroid: (spec.pose.tx, spec.pose.ty),
        apparent_diameter_px: spec.geometry.body_diameter_m * spec.pose.s,
        range_m: cam.focal_px / spec.pose.s,
        in_frame,
        fully_visible,
    }
}

/// Renders one frame; `seed` drives the sensor noise only.
pub fn render_scene(spec: &SceneSpec, seed: u64) -> Result<(GrayImage, GroundTruth), SceneError> {
    spec.validate()?;
    let mut canvas = render_radiance(spec);
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in canvas.values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok((canvas.quantize(), ground_truth(spec)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    /// Chaser position relative to the target, Hill frame, meters.
    pub position: Vector3<f64>,
    /// Target roll in the image, degrees.
    pub roll_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pointing {
    /// Boresight always on the target.
    Tracking,
    Fixed(CameraAttitude),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSeeding {
    /// Every frame uses the same noise seed.
    Fixed(u64),
    /// Frame `i` uses `base + i`.
    PerFrame(u64),
}

/// Renders one frame per trajectory sample.
pub fn make_sequence(
    trajectory: &[TrajectorySample],
    base: &SceneSpec,
    pointing: Pointing,
    seeding: NoiseSeeding,
) -> Result<Vec<(GrayImage, GroundTruth)>, SceneError> {
    for w in trajectory.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(SceneError::NonMonotoneTime {
                prev: w[0].t,
                next: w[1].t,
            });
        }
    }
    trajectory
        .iter()
        .enumerate()
        .map(|(i, sample)| {
            let attitude = match pointing {
                Pointing::Tracking => CameraAttitude::pointing_at_target(&sample.position),
                Pointing::Fixed(a) => a,
            };
            let spec = SceneSpec {
                pose: attitude.project(&sample.position, &base.camera, sample.roll_deg),
                ..base.clone()
            };
            let seed = match seeding {
                NoiseSeeding::Fixed(s) => s,
                NoiseSeeding::PerFrame(s) => s.wrapping_add(i as u64),
            };
            render_scene(&spec, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SceneSpec {
        SceneSpec {
            noise_sigma: 0.0,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn empty_scene_is_flat() {
        let spec = SceneSpec {
            target: false,
            ..quiet()
        };
        let (img, truth) = render_scene(&spec, 1).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 12));
        assert!(!truth.in_frame);
    }

    #[test]
    fn star_flux_is_conserved() {
        let spec = SceneSpec {
            target: false,
            background: 0.0,
            stars: StarField {
                stars: vec![Star {
                    x: 100.3,
                    y: 200.7,
                    flux: 500.0,
                }],
                ..StarField::default()
            },
            ..quiet()
        };
        let r = render_radiance(&spec);
        let total: f64 = r.values.iter().sum();
        assert!((total - 500.0).abs() < 0.01 * 500.0, "{total}");
        let (img, _) = render_scene(&spec, 1).unwrap();
        let dn: f64 = img.pixels().iter().map(|&p| p as f64).sum();
        assert!((dn - 500.0).abs() <= 0.02 * 500.0, "{dn}");
    }

    #[test]
    fn apparent_diameter_at_800m() {
        let cam = CameraModel::default();
        let r = Vector3::new(800.0, 0.0, 0.0);
        let pose = CameraAttitude::pointing_at_target(&r).project(&r, &cam, 0.0);
        let spec = SceneSpec { pose, ..quiet() };
        let (_, truth) = render_scene(&spec, 0).unwrap();
        assert!((truth.apparent_diameter_px - 20.0).abs() <= 0.5);
        assert!((truth.range_m - 800.0).abs() < 1e-9);
        assert!(truth.fully_visible);
    }

    #[test]
    fn body_centroid_matches_truth() {
        let spec = SceneSpec {
            pose: Pose2D::new(211.37, 305.81, 10.0, 30.0),
            background: 0.0,
            panel_intensity: 0.0,
            ..quiet()
        };
        let r = render_radiance(&spec);
        let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for y in 0..r.height {
            for x in 0..r.width {
                let v = r.values[y * r.width + x];
                m += v;
                sx += v * x as f64;
                sy += v * y as f64;
            }
        }
        assert!((sx / m - 211.37).abs() < 0.1 && (sy / m - 305.81).abs() < 0.1);
    }

    #[test]
    fn stars_and_target_add_linearly() {
        let stars = StarField {
            count: 80,
            ..StarField::default()
        };
        let joint = SceneSpec {
            stars: stars.clone(),
            ..quiet()
        };
        let target_only = quiet();
        let stars_only = SceneSpec {
            target: false,
            stars,
            ..quiet()
        };
        let (a, _) = render_scene(&joint, 0).unwrap();
        let (b, _) = render_scene(&target_only, 0).unwrap();
        let (c, _) = render_scene(&stars_only, 0).unwrap();
        let bg = joint.background;
        for i in 0..a.pixels().len() {
            let sum = b.pixels()[i] as f64 + c.pixels()[i] as f64 - bg;
            if sum < 255.0 {
                assert!((a.pixels()[i] as f64 - sum).abs() <= 1.0, "pixel {i}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = SceneSpec {
            stars: StarField {
                count: 50,
                ..StarField::default()
            },
            earth: Some(EarthClutter::default()),
            ..SceneSpec::default()
        };
        assert_eq!(
            render_scene(&spec, 9).unwrap().0,
            render_scene(&spec, 9).unwrap().0
        );
        assert_ne!(
            render_scene(&spec, 9).unwrap().0,
            render_scene(&spec, 10).unwrap().0
        );
    }

    #[test]
    fn target_outside_frame_is_flagged() {
        let spec = SceneSpec {
            pose: Pose2D::new(-500.0, 100.0, 10.0, 0.0),
            ..quiet()
        };
        let (img, truth) = render_scene(&spec, 0).unwrap();
        assert!(!truth.in_frame);
        assert!(img.pixels().iter().all(|&p| p == 12));
    }

    #[test]
    fn validation_rejects_bad_values() {
        for spec in [
            SceneSpec {
                noise_sigma: -1.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                psf_sigma: 0.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                body_intensity: 300.0,
                ..SceneSpec::default()
            },
        ] {
            assert!(render_scene(&spec, 0).is_err());
        }
    }

    fn approach(n: usize, from: f64, to: f64) -> Vec<TrajectorySample> {
        (0..n)
            .map(|i| TrajectorySample {
                t: i as f64,
                position: Vector3::new(from + (to - from) * i as f64 / (n - 1) as f64, 0.0, 0.0),
                roll_deg: 10.0,
            })
            .collect()
    }

    #[test]
    fn sequence_scale_grows_on_approach() {
        let frames = make_sequence(
            &approach(60, 800.0, 400.0),
            &quiet(),
            Pointing::Tracking,
            NoiseSeeding::PerFrame(3),
        )
        .unwrap();
        assert_eq!(frames.len(), 60);
        for w in frames.windows(2) {
            assert!(w[1].1.pose.s > w[0].1.pose.s);
        }
        let ratio = frames[59].1.apparent_diameter_px / frames[0].1.apparent_diameter_px;
        assert!((ratio - 2.0).abs() < 0.02);
    }

    #[test]
    fn constant_state_gives_identical_frames() {
        let traj: Vec<_> = (0..3)
            .map(|i| TrajectorySample {
                t: i as f64,
                position: Vector3::new(700.0, 5.0, -3.0),
                roll_deg: 0.0,
            })
            .collect();
        let spec = SceneSpec::default();
        let frames =
            make_sequence(&traj, &spec, Pointing::Tracking, NoiseSeeding::Fixed(4)).unwrap();
        assert!(frames.iter().all(|f| f.0 == frames[0].0));
    }

    #[test]
    fn non_monotone_time_is_rejected() {
        let mut traj = approach(3, 800.0, 700.0);
        traj[2].t = 0.5;
        assert!(matches!(
            make_sequence(&traj, &quiet(), Pointing::Tracking, NoiseSeeding::Fixed(0)),
            Err(SceneError::NonMonotoneTime { .. })
        ));
    }
}
