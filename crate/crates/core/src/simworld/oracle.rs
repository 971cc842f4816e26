use serde::{Deserialize, Serialize};

use super::track::{dot, norm, sub, Track, Vec2};
use super::{CarState, DrivingAction, VehicleParams};

/// Pure-pursuit steering plus curvature-aware speed control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Look-ahead distance is `gain * speed + base`, clamped to `[min, max]`.
    pub lookahead_gain: f64,
    pub lookahead_base: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    /// Comfortable lateral acceleration used to pick the target speed, m/s^2.
    pub lateral_accel: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Distance ahead scanned for curvature when picking the target speed.
    pub speed_preview: f64,
    pub throttle_gain: f64,
    pub brake_gain: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            lookahead_gain: 0.9,
            lookahead_base: 6.0,
            lookahead_min: 6.0,
            lookahead_max: 25.0,
            lateral_accel: 3.0,
            min_speed: 5.0,
            max_speed: 14.0,
            speed_preview: 30.0,
            throttle_gain: 0.5,
            brake_gain: 0.5,
        }
    }
}

impl OracleConfig {
    pub fn lookahead_distance(&self, speed: f64) -> f64 {
        (self.lookahead_gain * speed + self.lookahead_base).clamp(self.lookahead_min, self.lookahead_max)
    }

    pub fn target_speed(&self, track: &Track, state: &CarState) -> f64 {
        let s = track.geometry.project(state.position()).s;
        let kappa = track.geometry.max_curvature_ahead(s, self.speed_preview);
        let v = if kappa > 0.0 {
            (self.lateral_accel / kappa).sqrt()
        } else {
            f64::INFINITY
        };
        v.clamp(self.min_speed, self.max_speed)
    }
}

/// Centerline point the controller (and the synthetic gaze) aims at.
pub fn lookahead_point(track: &Track, state: &CarState, cfg: &OracleConfig) -> Vec2 {
    let s = track.geometry.project(state.position()).s;
    track.geometry.point_at(s + cfg.lookahead_distance(state.speed))
}

pub fn oracle_action(track: &Track, state: &CarState, vehicle: &VehicleParams, cfg: &OracleConfig) -> DrivingAction {
    let target = lookahead_point(track, state, cfg);
    let rel = sub(target, state.position());
    let dist = norm(rel).max(1e-6);
    // Angle from the heading to the target, positive when the target is on the right.
    let alpha = dot(rel, state.right()).atan2(dot(rel, state.forward()));
    let wheel = (2.0 * vehicle.wheelbase * alpha.sin() / dist).atan();
    let steering = wheel / vehicle.max_steer;

    let v_target = cfg.target_speed(track, state);
    // Drag feed-forward plus a proportional term; a negative command brakes.
    let hold = vehicle.drag * v_target / vehicle.max_accel;
    let command = hold + cfg.throttle_gain * (v_target - state.speed);
    let (throttle, brake) = if command >= 0.0 {
        (command, 0.0)
    } else {
        (0.0, -command * cfg.brake_gain / cfg.throttle_gain)
    };
    DrivingAction::new(steering, throttle, brake)
}
