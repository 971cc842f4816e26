use super::{normalize_angle, CarState, DrivingAction, VehicleParams};

/// One explicit-Euler step of the kinematic bicycle model.
///
/// Position advances along the heading held at the start of the step, then
/// heading and speed are updated. Speed never goes negative.
pub fn step_dynamics(state: &CarState, action: &DrivingAction, params: &VehicleParams, dt: f64) -> CarState {
    let a = DrivingAction::new(action.steering, action.throttle, action.brake);
    let v = state.speed;
    let x = state.x + v * state.heading.cos() * dt;
    let y = state.y + v * state.heading.sin() * dt;
    let yaw_rate = v / params.wheelbase * (a.steering * params.max_steer).tan();
    let heading = normalize_angle(state.heading + yaw_rate * dt);
    let accel = params.max_accel * a.throttle - params.max_brake * a.brake - params.drag * v;
    let speed = (v + accel * dt).max(0.0);
    CarState {
        x,
        y,
        heading,
        speed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_car_stays_put() {
        let s = CarState {
            x: 3.0,
            y: -2.0,
            heading: 0.7,
            speed: 0.0,
        };
        let next = step_dynamics(&s, &DrivingAction::default(), &VehicleParams::default(), 0.1);
        assert_eq!(next, s);
    }

    #[test]
    fn straight_line_advance() {
        let s = CarState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 10.0,
        };
        let next = step_dynamics(&s, &DrivingAction::new(0.0, 0.0, 0.0), &VehicleParams::default(), 0.1);
        assert_eq!(next.x, 1.0);
        assert_eq!(next.y, 0.0);
        assert_eq!(next.heading, 0.0);
    }

    #[test]
    fn full_brake_stops_monotonically() {
        let p = VehicleParams::default();
        let brake = DrivingAction::new(0.3, 0.0, 1.0);
        let mut s = CarState {
            x: 0.0,
            y: 0.0,
            heading: 0.2,
            speed: 30.0,
        };
        let mut steps = 0;
        while s.speed > 0.0 {
            let next = step_dynamics(&s, &brake, &p, 0.1);
            assert!(next.speed < s.speed);
            s = next;
            steps += 1;
            assert!(steps < 1000);
        }
        let rest = step_dynamics(&s, &brake, &p, 0.1);
        assert_eq!(rest.speed, 0.0);
        assert_eq!(rest.position(), s.position());
    }

    #[test]
    fn positive_steering_turns_right() {
        let s = CarState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 10.0,
        };
        let next = step_dynamics(&s, &DrivingAction::new(0.5, 0.0, 0.0), &VehicleParams::default(), 0.1);
        assert!(next.heading > 0.0);
    }
}
