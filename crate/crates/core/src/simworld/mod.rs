//! Toy top-down driving world: track geometry, a kinematic car, a
//! driver-centric renderer, an oracle path follower and a synthetic gaze
//! source.

mod dynamics;
mod gaze;
mod oracle;
mod render;
mod session;
mod track;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use dynamics::step_dynamics;
pub use gaze::{synth_gaze, GazeConfig};
pub use oracle::{lookahead_point, oracle_action, OracleConfig};
pub use render::{palette, render_frame, Camera, Frame};
pub use session::{run_session, GazeSample, GazeSource, LiveSession, SessionConfig, SessionLog, SessionMeta};
pub use track::{Geometry, Obstacle, ObstacleKind, Projection, Track, TrackSpec, Vec2};

/// Steering, throttle and brake, each held inside its range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrivingAction {
    /// Normalized steering in [-1, 1]; positive turns right.
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl DrivingAction {
    /// Builds an action, clamping each component into its range.
    pub fn new(steering: f64, throttle: f64, brake: f64) -> Self {
        DrivingAction {
            steering: clamp_finite(steering, -1.0, 1.0),
            throttle: clamp_finite(throttle, 0.0, 1.0),
            brake: clamp_finite(brake, 0.0, 1.0),
        }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.steering, self.throttle, self.brake]
    }

    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.steering)
            && (0.0..=1.0).contains(&self.throttle)
            && (0.0..=1.0).contains(&self.brake)
    }
}

fn clamp_finite(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        0.0f64.clamp(lo, hi)
    } else {
        v.clamp(lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    /// Radians in (-pi, pi]; 0 points along +x, positive rotates toward +y.
    pub heading: f64,
    pub speed: f64,
}

impl CarState {
    pub fn position(&self) -> Vec2 {
        [self.x, self.y]
    }

    pub fn forward(&self) -> Vec2 {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Unit vector to the driver's right.
    pub fn right(&self) -> Vec2 {
        [-self.heading.sin(), self.heading.cos()]
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Vehicle constants of the kinematic bicycle model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheelbase in meters.
    pub wheelbase: f64,
    /// Front-wheel angle at full steering, radians.
    pub max_steer: f64,
    /// Acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Deceleration at full brake, m/s^2.
    pub max_brake: f64,
    /// Linear drag coefficient, 1/s.
    pub drag: f64,
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.7,
            max_steer: 0.5,
            max_accel: 4.0,
            max_brake: 8.0,
            drag: 0.1,
            width: 1.8,
        }
    }
}

impl VehicleParams {
    /// Terminal speed at full throttle.
    pub fn max_speed(&self) -> f64 {
        self.max_accel / self.drag
    }
}
