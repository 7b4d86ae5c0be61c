use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use log::{debug, info, warn};
use nalgebra::Vector3;
use serde::Serialize;

use visnav::detection::{detect_target, detect_target_any_scale};
use visnav::image::{self, GrayImage};
use visnav::measurement::{detection_to_pose, pose_to_measurement};
use visnav::rvsim::{run_closed_loop, ScenarioKind, SensingMode, SimError, Summary, Telemetry};
use visnav::scenegen::{make_sequence, NoiseSeeding, Pointing, TrajectorySample};
use visnav::tracking::{project_model, track_frame, Pose2D, TrackResult, WireframeModel};

use crate::config::RunConfig;
use crate::overlay::draw_segments;

/// Non-error results that still map to a non-zero exit code.
#[derive(Debug, PartialEq)]
pub enum Outcome {
    Success,
    LostFrames(usize),
    ScenarioFailure(String),
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn frame_name(i: usize) -> String {
    format!("{i:04}.pgm")
}

pub fn generate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    prepare_dir(out)?;
    let s = &cfg.sequence;
    let (a, b) = (Vector3::from(s.start), Vector3::from(s.end));
    let span = (s.frames.max(2) - 1) as f64;
    let trajectory: Vec<TrajectorySample> = (0..s.frames)
        .map(|i| {
            let t = i as f64 * s.dt;
            TrajectorySample {
                t,
                position: a + (b - a) * (i as f64 / span),
                roll_deg: s.roll_deg + s.roll_rate_deg * t,
            }
        })
        .collect();
    let frames = make_sequence(
        &trajectory,
        &cfg.scene_template(),
        Pointing::Tracking,
        NoiseSeeding::PerFrame(cfg.seed),
    )?;
    let mut truth = String::from(visnav::scenegen::GroundTruth::CSV_HEADER);
    truth.push('\n');
    for (i, ((img, gt), sample)) in frames.iter().zip(&trajectory).enumerate() {
        image::save(img, out.join(frame_name(i))).with_context(|| format!("writing frame {i}"))?;
        truth.push_str(&gt.csv_row(i, sample.t));
        truth.push('\n');
    }
    write(&out.join("truth.csv"), truth)?;
    info!("wrote {} frames to {}", frames.len(), out.display());
    Ok(Outcome::Success)
}

fn list_frames(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries =
        fs::read_dir(dir).with_context(|| format!("reading image directory {}", dir.display()))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "png")) {
            frames.push(path);
        }
    }
    frames.sort();
    if frames.is_empty() {
        bail!("no .pgm or .png frames in {}", dir.display());
    }
    Ok(frames)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn save_overlay(
    dir: &Path,
    i: usize,
    img: &GrayImage,
    model: &WireframeModel,
    pose: Option<&Pose2D>,
) -> anyhow::Result<()> {
    let mut canvas = img.clone();
    if let Some(p) = pose {
        draw_segments(&mut canvas, &project_model(model, p), 255);
    }
    image::save(&canvas, dir.join(frame_name(i))).with_context(|| format!("writing overlay {i}"))
}

pub fn detect(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let frames = list_frames(input)?;
    let overlays = out.join("overlay");
    prepare_dir(&overlays)?;
    let model = WireframeModel::satellite(&cfg.scene.geometry, 48);
    let mut csv = String::from(
        "frame,file,status,centroid_x,centroid_y,diameter_px,attitude_deg,confidence\n",
    );
    let mut lost = 0;
    for (i, path) in frames.iter().enumerate() {
        let img = image::load(path).with_context(|| format!("loading {}", path.display()))?;
        let start = Instant::now();
        let result = detect_target_any_scale(&img, &cfg.detection, &cfg.scene.geometry);
        debug!(
            "frame {i}: detection {:.1} ms",
            start.elapsed().as_secs_f64() * 1e3
        );
        match result {
            Ok(d) => {
                writeln!(
                    csv,
                    "{i},{},detected,{:.4},{:.4},{:.4},{:.3},{:.4}",
                    file_name(path),
                    d.centroid.0,
                    d.centroid.1,
                    d.diameter,
                    d.attitude_deg,
                    d.confidence
                )?;
                let pose = detection_to_pose(&d, &model).ok();
                save_overlay(&overlays, i, &img, &model, pose.as_ref())?;
            }
            Err(e) => {
                lost += 1;
                let status = match e {
                    visnav::detection::DetectionError::NoTarget => "no-target".to_string(),
                    other => format!("error: {other}").replace(',', ";"),
                };
                writeln!(csv, "{i},{},{status},,,,,", file_name(path))?;
                save_overlay(&overlays, i, &img, &model, None)?;
            }
        }
    }
    write(&out.join("detections.csv"), csv)?;
    Ok(if lost == 0 {
        Outcome::Success
    } else {
        Outcome::LostFrames(lost)
    })
}

/// Detection followed by a tracker refinement seeded from it.
fn acquire(
    img: &GrayImage,
    cfg: &RunConfig,
    model: &WireframeModel,
    scale_hint: Option<f64>,
) -> Option<TrackResult> {
    let det = match scale_hint {
        Some(s) => detect_target(
            img,
            &cfg.detection
                .scaled_to(s * model.body_diameter, &cfg.scene.geometry),
        ),
        None => detect_target_any_scale(img, &cfg.detection, &cfg.scene.geometry),
    }
    .ok()?;
    let seed = detection_to_pose(&det, model).ok()?;
    track_frame(img, model, &seed, &cfg.tracking).ok()
}

pub fn track(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let frames = list_frames(input)?;
    let overlays = out.join("overlay");
    prepare_dir(&overlays)?;
    let model = WireframeModel::satellite(&cfg.scene.geometry, 48);
    let mut csv = String::from(
        "frame,file,status,tx,ty,s,theta_deg,score,converged,azimuth_deg,elevation_deg,range_m\n",
    );
    let mut previous: Option<Pose2D> = None;
    let mut lost = 0;
    for (i, path) in frames.iter().enumerate() {
        let img = image::load(path).with_context(|| format!("loading {}", path.display()))?;
        let start = Instant::now();
        let cadence = cfg.redetect_every > 0 && i > 0 && i % cfg.redetect_every == 0;
        let from_previous = |p: &Pose2D| track_frame(&img, &model, p, &cfg.tracking).ok();
        let result = match previous {
            None => acquire(&img, cfg, &model, None).map(|r| (r, "detected")),
            Some(p) if cadence => acquire(&img, cfg, &model, Some(p.s))
                .map(|r| (r, "redetected"))
                .or_else(|| from_previous(&p).map(|r| (r, "tracked"))),
            Some(p) => from_previous(&p)
                .map(|r| (r, "tracked"))
                .or_else(|| acquire(&img, cfg, &model, Some(p.s)).map(|r| (r, "redetected"))),
        };
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed > 1.0 {
            warn!("frame {i}: {elapsed:.2} s exceeds the 1 s cycle");
        } else {
            debug!("frame {i}: {:.1} ms", elapsed * 1e3);
        }
        match result {
            Some((r, status)) => {
                let p = r.pose;
                let t = i as f64 * cfg.sequence.dt;
                let m = pose_to_measurement(&p, &cfg.camera, t).ok();
                let (az, el, range) = match m {
                    Some(m) => (
                        format!("{:.6}", m.azimuth_deg),
                        format!("{:.6}", m.elevation_deg),
                        m.range_m.map_or(String::new(), |r| format!("{r:.4}")),
                    ),
                    None => Default::default(),
                };
                writeln!(
                    csv,
                    "{i},{},{status},{:.4},{:.4},{:.6},{:.4},{:.4},{},{az},{el},{range}",
                    file_name(path),
                    p.tx,
                    p.ty,
                    p.s,
                    p.theta_deg,
                    r.score,
                    r.converged as u8
                )?;
                save_overlay(&overlays, i, &img, &model, Some(&p))?;
                previous = Some(p);
            }
            None => {
                lost += 1;
                warn!("frame {i}: target lost");
                writeln!(csv, "{i},{},lost,,,,,,,,,", file_name(path))?;
                save_overlay(&overlays, i, &img, &model, None)?;
                previous = None;
            }
        }
    }
    write(&out.join("track.csv"), csv)?;
    Ok(if lost == 0 {
        Outcome::Success
    } else {
        Outcome::LostFrames(lost)
    })
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    failure: Option<String>,
}

fn write_telemetry(out: &Path, t: &Telemetry, failure: Option<String>) -> anyhow::Result<()> {
    write(&out.join("telemetry.csv"), t.to_csv())?;
    let summary = SummaryFile {
        summary: &t.summary,
        failure,
    };
    write(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    let mut errors = String::from(
        "t,est_error_m,meas_error_m,err_x,err_y,err_z,three_sigma_x,three_sigma_y,three_sigma_z\n",
    );
    let mut trajectory = String::from("t,x,y,z,est_x,est_y,est_z,meas_x,meas_y,meas_z\n");
    for r in &t.rows {
        let e = r.estimate.position - r.truth.position;
        let meas = r
            .measurement_error()
            .map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(
            errors,
            "{:.1},{:.6},{meas},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.t,
            e.norm(),
            e.x,
            e.y,
            e.z,
            3.0 * r.variance[0].sqrt(),
            3.0 * r.variance[1].sqrt(),
            3.0 * r.variance[2].sqrt()
        )?;
        let (p, q) = (r.truth.position, r.estimate.position);
        let m = r
            .measurement
            .and_then(|m| m.position())
            .map_or(",,".to_string(), |m| {
                format!("{:.4},{:.4},{:.4}", m.x, m.y, m.z)
            });
        writeln!(
            trajectory,
            "{:.1},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{m}",
            r.t, p.x, p.y, p.z, q.x, q.y, q.z
        )?;
    }
    write(&out.join("errors.csv"), errors)?;
    write(&out.join("trajectory.csv"), trajectory)
}

pub fn simulate(
    cfg: &RunConfig,
    kind: Option<ScenarioKind>,
    mode: SensingMode,
    out: &Path,
) -> anyhow::Result<Outcome> {
    prepare_dir(out)?;
    let mut scenario = cfg.scenario();
    if let Some(k) = kind {
        scenario.kind = k;
    }
    let start = Instant::now();
    let result = run_closed_loop(&scenario, mode);
    info!(
        "{} ({mode}) finished in {:.2} s",
        scenario.kind,
        start.elapsed().as_secs_f64()
    );
    match result {
        Ok(t) => {
            write_telemetry(out, &t, None)?;
            info!("final estimation error {:.3} m", t.summary.final_error_m);
            Ok(Outcome::Success)
        }
        Err(SimError::ScenarioFailure {
            t,
            reason,
            telemetry,
        }) => {
            let msg = format!("scenario failed at t = {t} s: {reason}");
            write_telemetry(out, &telemetry, Some(msg.clone()))?;
            Ok(Outcome::ScenarioFailure(msg))
        }
        Err(e @ SimError::NumericalFailure { .. }) => Ok(Outcome::ScenarioFailure(e.to_string())),
        Err(e) => Err(e.into()),
    }
}
