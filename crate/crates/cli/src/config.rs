use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use serde::{Deserialize, Serialize};

use visnav::detection::DetectionConfig;
use visnav::measurement::CameraModel;
use visnav::rvsim::ScenarioConfig;
use visnav::scenegen::SceneSpec;
use visnav::tracking::TrackerConfig;

/// Straight-line approach rendered by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub frames: usize,
    /// Frame period, seconds.
    pub dt: f64,
    /// Chaser position in the Hill frame at the first and last frame, meters.
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub roll_deg: f64,
    /// Roll rate, degrees per second.
    pub roll_rate_deg: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 60,
            dt: 1.0,
            start: [800.0, 0.0, 0.0],
            end: [400.0, 0.0, 0.0],
            roll_deg: 30.0,
            roll_rate_deg: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Camera for `generate`, `detect` and `track`.
    pub camera: CameraModel,
    pub detection: DetectionConfig,
    pub tracking: TrackerConfig,
    /// Scene template; camera and pose are replaced per frame.
    pub scene: SceneSpec,
    pub sequence: SequenceConfig,
    /// Closed-loop settings; its camera, scene, detection and tracker are
    /// taken from this file's top-level sections except the camera.
    pub scenario: ScenarioConfig,
    pub output: OutputConfig,
    /// Frames between forced re-detections while tracking; 0 disables.
    pub redetect_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            camera: CameraModel::default(),
            detection: DetectionConfig::default(),
            tracking: TrackerConfig::default(),
            scene: SceneSpec::default(),
            sequence: SequenceConfig::default(),
            scenario: ScenarioConfig::default(),
            output: OutputConfig::default(),
            redetect_every: 30,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.camera.validate().context("camera")?;
        self.detection.validate().context("detection")?;
        self.scene_template().validate().context("scene")?;
        let s = &self.sequence;
        ensure!(s.frames > 0, "sequence.frames must be positive");
        ensure!(s.dt > 0.0, "sequence.dt must be positive");
        ensure!(
            s.start.iter().chain(&s.end).all(|v| v.is_finite()),
            "sequence endpoints must be finite"
        );
        Ok(())
    }

    pub fn scene_template(&self) -> SceneSpec {
        SceneSpec {
            camera: self.camera,
            ..self.scene.clone()
        }
    }

    /// Scenario with the shared sections and the run seed filled in.
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            seed: self.seed,
            scene: self.scene.clone(),
            detection: self.detection.clone(),
            tracker: self.tracking.clone(),
            ..self.scenario.clone()
        }
    }
}
