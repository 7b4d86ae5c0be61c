//! Closed-loop rendezvous simulation: CW dynamics, guidance, an EKF fed by
//! the camera chain, and scenario runners.

mod closed_loop;
mod dynamics;
mod filter;

use thiserror::Error;

pub use closed_loop::{
    monte_carlo_nees, run_closed_loop, FlyAround, NeesReport, ScenarioConfig, ScenarioKind,
    SensingMode, Summary, Telemetry, TelemetryRow,
};
pub use dynamics::{
    cw_stm, forced_translation_guidance, natural_acceleration, plan_two_impulse, propagate,
    ForcedTranslation, GuidanceGains, Impulse, ManeuverPlan, RelativeState, GEO_MEAN_MOTION,
};
pub use filter::{
    ekf_step, measurement_jacobian, measurement_model, process_noise, FilterConfig, FilterState,
    NavMeasurement, QSchedule,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("degenerate transfer time {0} s")]
    DegenerateTransfer(f64),
    #[error("covariance lost positive semidefiniteness at t = {t} s")]
    NumericalFailure { t: f64 },
    #[error("scenario failed at t = {t} s: {reason}")]
    ScenarioFailure {
        t: f64,
        reason: String,
        telemetry: Box<Telemetry>,
    },
    #[error(transparent)]
    Scene(#[from] crate::scenegen::SceneError),
}
