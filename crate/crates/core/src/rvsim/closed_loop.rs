//! Scenario runner tying truth dynamics, the camera chain, the filter and
//! guidance together at a fixed cadence.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::detection::{analyze, DetectionConfig};
use crate::measurement::{detection_to_pose, pose_to_measurement, CameraAttitude, CameraModel};
use crate::scenegen::{render_scene, SceneSpec};
use crate::tracking::{track_frame, Pose2D, TrackerConfig, WireframeModel};

use super::dynamics::{
    forced_translation_guidance, plan_two_impulse, propagate, ForcedTranslation, GuidanceGains,
    ManeuverPlan, RelativeState,
};
use super::filter::{
    ekf_step, measurement_model, FilterConfig, FilterState, NavMeasurement, QSchedule,
};
use super::{SimError, GEO_MEAN_MOTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ForcedTranslation,
    FlyAround,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingMode {
    /// Render every frame and run detection and tracking on it.
    SyntheticImages,
    /// Draw measurements from the filter's own noise model.
    MeasurementNoiseModel,
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forced-translation" => Ok(Self::ForcedTranslation),
            "fly-around" => Ok(Self::FlyAround),
            _ => Err(format!(
                "unknown scenario '{s}' (expected forced-translation or fly-around)"
            )),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ForcedTranslation => "forced-translation",
            Self::FlyAround => "fly-around",
        })
    }
}

impl FromStr for SensingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic-images" => Ok(Self::SyntheticImages),
            "measurement-noise-model" => Ok(Self::MeasurementNoiseModel),
            _ => Err(format!(
                "unknown mode '{s}' (expected synthetic-images or measurement-noise-model)"
            )),
        }
    }
}

impl fmt::Display for SensingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SyntheticImages => "synthetic-images",
            Self::MeasurementNoiseModel => "measurement-noise-model",
        })
    }
}

/// Transfer from a V-bar hold point to an R-bar station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlyAround {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub duration: f64,
}

impl Default for FlyAround {
    fn default() -> Self {
        Self {
            start: [118.0, 0.0, 0.0],
            end: [0.0, 0.0, -50.0],
            duration: 3000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub mean_motion: f64,
    /// Cycle period, seconds.
    pub dt: f64,
    pub forced_translation: ForcedTranslation,
    pub fly_around: FlyAround,
    pub gains: GuidanceGains,
    /// `None` uses 8000 px for the forced translation and 1600 px for the
    /// fly-around.
    pub camera: Option<CameraModel>,
    /// Filter acceleration noise, m/s^2.
    pub accel_sigma: f64,
    pub q_schedule: Option<QSchedule>,
    pub update_iterations: usize,
    /// Unmodelled acceleration acting on the truth, m/s^2.
    pub truth_accel_sigma: f64,
    pub initial_position_sigma: f64,
    pub initial_velocity_sigma: f64,
    pub seed: u64,
    /// Consecutive frames without a measurement before the run fails.
    pub redetection_budget: usize,
    /// Target roll in the image, degrees.
    pub roll_deg: f64,
    /// Rendering template; camera and pose are set per frame.
    pub scene: SceneSpec,
    /// Base detection settings, rescaled to the predicted target size.
    pub detection: DetectionConfig,
    pub tracker: TrackerConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::ForcedTranslation,
            mean_motion: GEO_MEAN_MOTION,
            dt: 1.0,
            forced_translation: ForcedTranslation::default(),
            fly_around: FlyAround::default(),
            gains: GuidanceGains::default(),
            camera: None,
            accel_sigma: 2e-5,
            q_schedule: None,
            update_iterations: 5,
            truth_accel_sigma: 2e-5,
            initial_position_sigma: 5.0,
            initial_velocity_sigma: 0.01,
            seed: 1,
            redetection_budget: 10,
            roll_deg: 30.0,
            scene: SceneSpec::default(),
            detection: DetectionConfig::default(),
            tracker: TrackerConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn camera(&self) -> CameraModel {
        self.camera.unwrap_or_else(|| {
            let f = match self.kind {
                ScenarioKind::ForcedTranslation => 8000.0,
                ScenarioKind::FlyAround => 1600.0,
            };
            CameraModel::centered(f, 512, 512)
        })
    }

    pub fn duration(&self) -> f64 {
        match self.kind {
            ScenarioKind::ForcedTranslation => self.forced_translation.duration,
            ScenarioKind::FlyAround => self.fly_around.duration,
        }
    }

    pub fn model(&self) -> WireframeModel {
        WireframeModel::satellite(&self.scene.geometry, 48)
    }

    pub fn filter_config(&self) -> FilterConfig {
        let cam = self.camera();
        FilterConfig {
            sigma_px: cam.sigma_px,
            focal_px: cam.focal_px,
            reference_length_m: self.scene.geometry.extent_m(),
            accel_sigma: self.accel_sigma,
            q_schedule: self.q_schedule,
            update_iterations: self.update_iterations,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.mean_motion > 0.0) {
            return bad("mean_motion must be positive");
        }
        if !(self.dt > 0.0) || !(self.duration() >= self.dt) {
            return bad("need dt > 0 and a scenario duration of at least one cycle");
        }
        if !(self.truth_accel_sigma >= 0.0
            && self.initial_position_sigma > 0.0
            && self.initial_velocity_sigma > 0.0)
        {
            return bad("noise and initial uncertainty must be positive");
        }
        self.camera()
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.filter_config().validate()?;
        self.scene.validate()?;
        self.detection
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let start = self.start_position();
        if !(start.norm() > 0.0) || !start.iter().all(|v| v.is_finite()) {
            return bad("start position must be finite and away from the target");
        }
        Ok(())
    }

    fn start_position(&self) -> Vector3<f64> {
        match self.kind {
            ScenarioKind::ForcedTranslation => {
                Vector3::new(self.forced_translation.x_start, 0.0, 0.0)
            }
            ScenarioKind::FlyAround => Vector3::from(self.fly_around.start),
        }
    }
}

/// One filter cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelemetryRow {
    pub t: f64,
    pub truth: RelativeState,
    pub measurement: Option<NavMeasurement>,
    pub estimate: RelativeState,
    pub variance: Vector6<f64>,
    pub command: Vector3<f64>,
    pub tracker_score: Option<f64>,
    pub nees: f64,
}

impl TelemetryRow {
    pub const CSV_HEADER: &'static str = "t,x,y,z,vx,vy,vz,meas_az,meas_el,meas_range,\
est_x,est_y,est_z,est_vx,est_vy,est_vz,var_x,var_y,var_z,var_vx,var_vy,var_vz,\
cmd_x,cmd_y,cmd_z,tracker_score,nees";

    pub fn csv_row(&self) -> String {
        let mut cols = vec![format!("{:.1}", self.t)];
        cols.extend(self.truth.to_vector().iter().map(|v| format!("{v:.6}")));
        match &self.measurement {
            Some(m) => {
                cols.push(format!("{:.9}", m.azimuth));
                cols.push(format!("{:.9}", m.elevation));
                cols.push(m.range.map_or(String::new(), |r| format!("{r:.6}")));
            }
            None => cols.extend([String::new(), String::new(), String::new()]),
        }
        cols.extend(self.estimate.to_vector().iter().map(|v| format!("{v:.6}")));
        cols.extend(self.variance.iter().map(|v| format!("{v:.6e}")));
        cols.extend(self.command.iter().map(|v| format!("{v:.6e}")));
        cols.push(
            self.tracker_score
                .map_or(String::new(), |s| format!("{s:.4}")),
        );
        cols.push(format!("{:.4}", self.nees));
        cols.join(",")
    }

    pub fn position_error(&self) -> f64 {
        (self.estimate.position - self.truth.position).norm()
    }

    pub fn measurement_error(&self) -> Option<f64> {
        let p = self.measurement.as_ref()?.position()?;
        Some((p - self.truth.position).norm())
    }

    /// Every state component lies within three filter sigmas.
    pub fn within_3_sigma(&self) -> bool {
        let e = self.estimate.to_vector() - self.truth.to_vector();
        e.iter()
            .zip(self.variance.iter())
            .all(|(e, v)| e.abs() <= 3.0 * v.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: ScenarioKind,
    pub mode: SensingMode,
    pub steps: usize,
    pub final_error_m: f64,
    /// RMS position estimation error over all cycles.
    pub rms_estimate: f64,
    /// RMS position error of the raw measurements that carried a range.
    pub rms_measurement: f64,
    /// Fraction of cycles with every state error inside 3 sigma.
    pub consistency_fraction: f64,
    pub mean_nees: f64,
    pub range_measurements: usize,
    pub angle_only_measurements: usize,
    pub missed_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Telemetry {
    pub rows: Vec<TelemetryRow>,
    pub plan: ManeuverPlan,
    pub summary: Summary,
}

impl Telemetry {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TelemetryRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

fn summarize(kind: ScenarioKind, mode: SensingMode, rows: &[TelemetryRow]) -> Summary {
    let n = rows.len().max(1) as f64;
    let meas: Vec<f64> = rows
        .iter()
        .filter_map(TelemetryRow::measurement_error)
        .collect();
    let rms = |v: &mut dyn Iterator<Item = f64>, count: f64| {
        (v.map(|e| e * e).sum::<f64>() / count.max(1.0)).sqrt()
    };
    Summary {
        scenario: kind,
        mode,
        steps: rows.len(),
        final_error_m: rows.last().map_or(f64::NAN, TelemetryRow::position_error),
        rms_estimate: rms(&mut rows.iter().map(TelemetryRow::position_error), n),
        rms_measurement: rms(&mut meas.iter().copied(), meas.len() as f64),
        consistency_fraction: rows.iter().filter(|r| r.within_3_sigma()).count() as f64 / n,
        mean_nees: rows.iter().map(|r| r.nees).sum::<f64>() / n,
        range_measurements: rows
            .iter()
            .filter(|r| r.measurement.is_some_and(|m| m.range.is_some()))
            .count(),
        angle_only_measurements: rows
            .iter()
            .filter(|r| r.measurement.is_some_and(|m| m.range.is_none()))
            .count(),
        missed_frames: rows.iter().filter(|r| r.measurement.is_none()).count(),
    }
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

/// Camera chain: render, track (or detect), convert to a Hill-frame
/// measurement.
struct ImageSensor {
    camera: CameraModel,
    model: WireframeModel,
    scene: SceneSpec,
    detection: DetectionConfig,
    tracker: TrackerConfig,
    roll_deg: f64,
    seed: u64,
    previous: Option<(Pose2D, f64)>,
}

struct Reading {
    measurement: Option<NavMeasurement>,
    score: Option<f64>,
}

impl ImageSensor {
    fn sense(
        &mut self,
        frame: usize,
        t: f64,
        truth: &Vector3<f64>,
        predicted_range: f64,
    ) -> Result<Reading, SimError> {
        let attitude = CameraAttitude::pointing_at_target(truth);
        let spec = SceneSpec {
            camera: self.camera,
            pose: attitude.project(truth, &self.camera, self.roll_deg),
            ..self.scene.clone()
        };
        let (image, _) = render_scene(&spec, self.seed.wrapping_add(frame as u64))?;
        let to_nav = |pose: &Pose2D, with_range: bool| -> Option<NavMeasurement> {
            let m = pose_to_measurement(pose, &self.camera, t).ok()?;
            let r = attitude.relative_position(m.azimuth_deg, m.elevation_deg, m.range_m?);
            Some(NavMeasurement::from_position(t, &r, with_range))
        };

        if let Some((pose, range)) = self.previous {
            let seed = Pose2D {
                s: pose.s * range / predicted_range,
                ..pose
            };
            if let Ok(r) = track_frame(&image, &self.model, &seed, &self.tracker) {
                self.previous = Some((r.pose, predicted_range));
                return Ok(Reading {
                    measurement: to_nav(&r.pose, r.converged),
                    score: Some(r.score),
                });
            }
        }
        self.previous = None;
        let body_px = self.camera.focal_px * self.model.body_diameter / predicted_range;
        let cfg = self.detection.scaled_to(body_px, &self.scene.geometry);
        let Ok(Ok(detection)) = analyze(&image, &cfg).map(|t| t.result) else {
            return Ok(Reading {
                measurement: None,
                score: None,
            });
        };
        let Ok(seed) = detection_to_pose(&detection, &self.model) else {
            return Ok(Reading {
                measurement: None,
                score: None,
            });
        };
        match track_frame(&image, &self.model, &seed, &self.tracker) {
            Ok(r) => {
                self.previous = Some((r.pose, predicted_range));
                Ok(Reading {
                    measurement: to_nav(&r.pose, r.converged),
                    score: Some(r.score),
                })
            }
            Err(_) => Ok(Reading {
                measurement: to_nav(&seed, false),
                score: None,
            }),
        }
    }
}

/// Runs one scenario at the configured cadence.
pub fn run_closed_loop(cfg: &ScenarioConfig, mode: SensingMode) -> Result<Telemetry, SimError> {
    cfg.validate()?;
    let n = cfg.mean_motion;
    let filter_cfg = cfg.filter_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut truth = RelativeState::at_rest(cfg.start_position());
    let p0 = Matrix6::from_diagonal(&Vector6::new(
        cfg.initial_position_sigma.powi(2),
        cfg.initial_position_sigma.powi(2),
        cfg.initial_position_sigma.powi(2),
        cfg.initial_velocity_sigma.powi(2),
        cfg.initial_velocity_sigma.powi(2),
        cfg.initial_velocity_sigma.powi(2),
    ));
    let estimate = RelativeState::new(
        truth.position + gaussian3(&mut rng, cfg.initial_position_sigma),
        truth.velocity + gaussian3(&mut rng, cfg.initial_velocity_sigma),
    );
    let mut fs = FilterState::new(estimate, p0, 0.0);

    let plan = match cfg.kind {
        ScenarioKind::ForcedTranslation => cfg.forced_translation.plan(),
        ScenarioKind::FlyAround => plan_two_impulse(
            &fs.estimate.position,
            &Vector3::from(cfg.fly_around.end),
            cfg.fly_around.duration,
            n,
        )?,
    };

    let mut sensor = ImageSensor {
        camera: cfg.camera(),
        model: cfg.model(),
        scene: cfg.scene.clone(),
        detection: cfg.detection.clone(),
        tracker: cfg.tracker.clone(),
        roll_deg: cfg.roll_deg,
        seed: cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        previous: None,
    };

    let steps = (cfg.duration() / cfg.dt).round() as usize;
    let mut rows = Vec::with_capacity(steps);
    let mut misses = 0usize;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let dv = plan.impulse_in(t, cfg.dt);
        truth.velocity += dv;
        fs.estimate.velocity += dv;
        let command = match &plan.profile {
            Some(profile) => forced_translation_guidance(&fs.estimate, profile, t, n, &cfg.gains),
            None => Vector3::zeros(),
        };
        let disturbance = gaussian3(&mut rng, cfg.truth_accel_sigma);
        truth = propagate(&truth, &(command + disturbance), cfg.dt, n);
        let t_next = t + cfg.dt;

        let (measurement, score) = match mode {
            SensingMode::MeasurementNoiseModel => {
                let h = measurement_model(&truth.position);
                let (sa, sr) = filter_cfg.measurement_sigma(h.z);
                let noise = gaussian3(&mut rng, 1.0);
                let m = NavMeasurement {
                    t: t_next,
                    azimuth: h.x + sa * noise.x,
                    elevation: h.y + sa * noise.y,
                    range: Some(h.z + sr * noise.z),
                };
                (Some(m), None)
            }
            SensingMode::SyntheticImages => {
                let predicted = propagate(&fs.estimate, &command, cfg.dt, n).position.norm();
                let reading = sensor.sense(k + 1, t_next, &truth.position, predicted)?;
                (reading.measurement, reading.score)
            }
        };
        misses = if measurement.is_some() { 0 } else { misses + 1 };

        fs = match ekf_step(&fs, &command, cfg.dt, measurement.as_ref(), &filter_cfg, n) {
            Ok(next) => next,
            Err(e) => return Err(failure(cfg, mode, rows, plan, t_next, e.to_string())),
        };
        rows.push(TelemetryRow {
            t: t_next,
            truth,
            measurement,
            estimate: fs.estimate,
            variance: fs.covariance.diagonal(),
            command,
            tracker_score: score,
            nees: fs.nees(&truth),
        });
        if misses > cfg.redetection_budget {
            let reason = format!("no measurement for {misses} consecutive frames");
            return Err(failure(cfg, mode, rows, plan, t_next, reason));
        }
    }
    let summary = summarize(cfg.kind, mode, &rows);
    Ok(Telemetry {
        rows,
        plan,
        summary,
    })
}

fn failure(
    cfg: &ScenarioConfig,
    mode: SensingMode,
    rows: Vec<TelemetryRow>,
    plan: ManeuverPlan,
    t: f64,
    reason: String,
) -> SimError {
    let summary = summarize(cfg.kind, mode, &rows);
    SimError::ScenarioFailure {
        t,
        reason,
        telemetry: Box::new(Telemetry {
            rows,
            plan,
            summary,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeesReport {
    pub runs: usize,
    /// Monte Carlo mean NEES per cycle.
    pub per_step: Vec<f64>,
    /// Time average of `per_step`.
    pub mean: f64,
    /// Two-sided 95% interval of the run-averaged NEES for six states.
    pub band: (f64, f64),
    pub fraction_in_band: f64,
}

impl NeesReport {
    pub fn consistent(&self) -> bool {
        self.mean >= self.band.0 && self.mean <= self.band.1
    }
}

/// Two-sided 95% interval of the mean of `runs` chi-square variables with
/// `dof` degrees of freedom.
pub fn nees_band(dof: usize, runs: usize) -> (f64, f64) {
    let k = (dof * runs) as f64;
    (
        chi_square_quantile(k, 0.025) / runs as f64,
        chi_square_quantile(k, 0.975) / runs as f64,
    )
}

/// Bisection on the regularized incomplete gamma function; the library
/// inverse CDF stops at a coarse tolerance.
fn chi_square_quantile(k: f64, p: f64) -> f64 {
    let cdf = |x: f64| gamma_lr(k / 2.0, x / 2.0);
    let (mut lo, mut hi) = (0.0, k + 20.0 * (2.0 * k).sqrt() + 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Measurement-noise Monte Carlo over `runs` seeds starting at `cfg.seed`.
pub fn monte_carlo_nees(cfg: &ScenarioConfig, runs: usize) -> Result<NeesReport, SimError> {
    if runs == 0 {
        return Err(SimError::InvalidConfig(
            "need at least one Monte Carlo run".into(),
        ));
    }
    let mut sums: Vec<f64> = Vec::new();
    for i in 0..runs {
        let run_cfg = ScenarioConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let t = run_closed_loop(&run_cfg, SensingMode::MeasurementNoiseModel)?;
        if sums.is_empty() {
            sums = vec![0.0; t.rows.len()];
        }
        for (s, r) in sums.iter_mut().zip(&t.rows) {
            *s += r.nees;
        }
    }
    let per_step: Vec<f64> = sums.iter().map(|s| s / runs as f64).collect();
    let band = nees_band(6, runs);
    let inside = per_step
        .iter()
        .filter(|v| **v >= band.0 && **v <= band.1)
        .count();
    Ok(NeesReport {
        runs,
        mean: per_step.iter().sum::<f64>() / per_step.len().max(1) as f64,
        fraction_in_band: inside as f64 / per_step.len().max(1) as f64,
        per_step,
        band,
    })
}
