//! Clohessy-Wiltshire relative motion in the target-centered Hill frame:
//! x along-track (V-bar), y cross-track, z radial (R-bar, towards Earth).

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Sidereal rate, rad/s.
pub const GEO_MEAN_MOTION: f64 = 7.2921159e-5;

/// Longest single RK4 step taken by [`propagate`], seconds.
const MAX_RK4_STEP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl RelativeState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self::new(position, Vector3::zeros())
    }

    pub fn zero() -> Self {
        Self::at_rest(Vector3::zeros())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let (p, v) = (self.position, self.velocity);
        Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

/// Closed-form transition matrix over `dt`.
pub fn cw_stm(n: f64, dt: f64) -> Matrix6<f64> {
    assert!(n > 0.0, "mean motion must be positive");
    let nt = n * dt;
    let (s, c) = nt.sin_cos();
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0, 0.0, 6.0 * (nt - s),       (4.0 * s - 3.0 * nt) / n, 0.0,   2.0 * (1.0 - c) / n,
        0.0, c,   0.0,                  0.0,                      s / n, 0.0,
        0.0, 0.0, 4.0 - 3.0 * c,        -2.0 * (1.0 - c) / n,     0.0,   s / n,
        0.0, 0.0, 6.0 * n * (1.0 - c),  4.0 * c - 3.0,            0.0,   2.0 * s,
        0.0, -n * s, 0.0,               0.0,                      c,     0.0,
        0.0, 0.0, 3.0 * n * s,          -2.0 * s,                 0.0,   c,
    );
    m
}

/// Natural (unforced) relative acceleration at `state`.
pub fn natural_acceleration(state: &RelativeState, n: f64) -> Vector3<f64> {
    let (p, v) = (state.position, state.velocity);
    Vector3::new(
        2.0 * n * v.z,
        -n * n * p.y,
        3.0 * n * n * p.z - 2.0 * n * v.x,
    )
}

fn derivative(x: &Vector6<f64>, accel: &Vector3<f64>, n: f64) -> Vector6<f64> {
    let s = RelativeState::from_vector(x);
    let a = natural_acceleration(&s, n) + accel;
    Vector6::new(x[3], x[4], x[5], a.x, a.y, a.z)
}

/// RK4 integration under a constant commanded acceleration.
pub fn propagate(state: &RelativeState, accel: &Vector3<f64>, dt: f64, n: f64) -> RelativeState {
    assert!(dt > 0.0, "dt must be positive");
    let steps = (dt / MAX_RK4_STEP).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let mut x = state.to_vector();
    for _ in 0..steps {
        let k1 = derivative(&x, accel, n);
        let k2 = derivative(&(x + k1 * (h / 2.0)), accel, n);
        let k3 = derivative(&(x + k2 * (h / 2.0)), accel, n);
        let k4 = derivative(&(x + k3 * h), accel, n);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    RelativeState::from_vector(&x)
}

/// Straight-line V-bar approach between two along-track stations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcedTranslation {
    pub x_start: f64,
    pub x_end: f64,
    pub duration: f64,
}

impl Default for ForcedTranslation {
    fn default() -> Self {
        Self {
            x_start: 2000.0,
            x_end: 100.0,
            duration: 900.0,
        }
    }
}

impl ForcedTranslation {
    pub fn speed(&self) -> f64 {
        (self.x_end - self.x_start) / self.duration
    }

    /// Reference position, velocity and acceleration at `t` seconds after
    /// the start. The velocity steps at both ends are the two boosts.
    pub fn reference(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let tc = t.clamp(0.0, self.duration);
        let x = self.x_start + self.speed() * tc;
        let vx = if t >= 0.0 && t < self.duration {
            self.speed()
        } else {
            0.0
        };
        (
            Vector3::new(x, 0.0, 0.0),
            Vector3::new(vx, 0.0, 0.0),
            Vector3::zeros(),
        )
    }

    pub fn plan(&self) -> ManeuverPlan {
        let dv = Vector3::new(self.speed(), 0.0, 0.0);
        ManeuverPlan {
            impulses: vec![
                Impulse { t: 0.0, dv },
                Impulse {
                    t: self.duration,
                    dv: -dv,
                },
            ],
            span: (0.0, self.duration),
            profile: Some(*self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Impulse {
    pub t: f64,
    pub dv: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManeuverPlan {
    pub impulses: Vec<Impulse>,
    pub span: (f64, f64),
    /// Continuous acceleration is commanded by the guidance law along
    /// this profile.
    pub profile: Option<ForcedTranslation>,
}

impl ManeuverPlan {
    /// Sum of the impulses falling in `[t, t + dt)`.
    pub fn impulse_in(&self, t: f64, dt: f64) -> Vector3<f64> {
        self.impulses
            .iter()
            .filter(|i| i.t >= t && i.t < t + dt)
            .map(|i| i.dv)
            .sum()
    }
}

fn blocks(phi: &Matrix6<f64>) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    (
        phi.fixed_view::<3, 3>(0, 0).into_owned(),
        phi.fixed_view::<3, 3>(0, 3).into_owned(),
        phi.fixed_view::<3, 3>(3, 0).into_owned(),
        phi.fixed_view::<3, 3>(3, 3).into_owned(),
    )
}

/// Two-impulse transfer from rest at `r0` to rest at `rf` in `duration`.
pub fn plan_two_impulse(
    r0: &Vector3<f64>,
    rf: &Vector3<f64>,
    duration: f64,
    n: f64,
) -> Result<ManeuverPlan, SimError> {
    if !(duration > 0.0) {
        return Err(SimError::InvalidConfig(format!(
            "transfer time must be positive, got {duration}"
        )));
    }
    let (rr, rv, vr, vv) = blocks(&cw_stm(n, duration));
    let scale = duration.max(1.0 / n);
    if rv.determinant().abs() < 1e-12 * scale.powi(3) {
        return Err(SimError::DegenerateTransfer(duration));
    }
    let v0 = rv
        .lu()
        .solve(&(rf - rr * r0))
        .ok_or(SimError::DegenerateTransfer(duration))?;
    let vf = vr * r0 + vv * v0;
    Ok(ManeuverPlan {
        impulses: vec![
            Impulse { t: 0.0, dv: v0 },
            Impulse {
                t: duration,
                dv: -vf,
            },
        ],
        span: (0.0, duration),
        profile: None,
    })
}

/// Gains and limits of the forced-translation controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceGains {
    /// Proportional gain, 1/s^2.
    pub kp: f64,
    /// Derivative gain, 1/s.
    pub kd: f64,
    /// Largest commanded acceleration magnitude, m/s^2.
    pub thrust_limit: f64,
}

impl Default for GuidanceGains {
    fn default() -> Self {
        let omega: f64 = 0.02;
        Self {
            kp: omega * omega,
            kd: 2.0 * 0.9 * omega,
            thrust_limit: 0.02,
        }
    }
}

/// Commanded acceleration keeping `state` on the forced-translation
/// profile at time `t`: CW feedforward plus PD on the tracking error.
pub fn forced_translation_guidance(
    state: &RelativeState,
    profile: &ForcedTranslation,
    t: f64,
    n: f64,
    gains: &GuidanceGains,
) -> Vector3<f64> {
    let (r_ref, v_ref, a_ref) = profile.reference(t);
    let feedforward = a_ref - natural_acceleration(&RelativeState::new(r_ref, v_ref), n);
    let correction = -(state.position - r_ref) * gains.kp - (state.velocity - v_ref) * gains.kd;
    let command = feedforward + correction;
    let norm = command.norm();
    if norm > gains.thrust_limit {
        command * (gains.thrust_limit / norm)
    } else {
        command
    }
}
