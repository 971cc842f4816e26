use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::oracle::{lookahead_point, OracleConfig};
use super::render::Camera;
use super::session::GazeSample;
use super::track::{norm, sub, Track};
use super::CarState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeConfig {
    /// Isotropic Gaussian noise, pixels.
    pub noise_sigma: f64,
    /// Chance that a sample jumps to the nearest visible obstacle.
    pub saccade_prob: f64,
}

impl Default for GazeConfig {
    fn default() -> Self {
        GazeConfig {
            noise_sigma: 3.0,
            saccade_prob: 0.1,
        }
    }
}

/// A synthetic fixation: the projected look-ahead point plus pixel noise,
/// occasionally replaced by the nearest obstacle in view. Always clamped to
/// the frame.
pub fn synth_gaze<R: Rng + ?Sized>(
    track: &Track,
    state: &CarState,
    camera: &Camera,
    oracle: &OracleConfig,
    cfg: &GazeConfig,
    t_ms: u64,
    rng: &mut R,
) -> GazeSample {
    let look = lookahead_point(track, state, oracle);
    let (mut x, mut y) = camera.world_to_pixel(state, look);
    let jump = rng.random::<f64>() < cfg.saccade_prob;
    if jump {
        if let Some((ox, oy)) = nearest_visible_obstacle(track, state, camera) {
            x = ox;
            y = oy;
        }
    }
    if cfg.noise_sigma > 0.0 {
        let n = Normal::new(0.0, cfg.noise_sigma).expect("noise sigma is positive and finite");
        x += n.sample(rng);
        y += n.sample(rng);
    }
    let hi = (camera.width - 1) as f64;
    GazeSample {
        t_ms,
        x: x.clamp(0.0, hi),
        y: y.clamp(0.0, hi),
    }
}

fn nearest_visible_obstacle(track: &Track, state: &CarState, camera: &Camera) -> Option<(f64, f64)> {
    let hi = (camera.width - 1) as f64;
    track
        .spec
        .obstacles
        .iter()
        .map(|o| {
            let c = o.center();
            (norm(sub(c, state.position())), camera.world_to_pixel(state, c))
        })
        .filter(|&(_, (x, y))| (0.0..=hi).contains(&x) && (0.0..=hi).contains(&y))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::TrackSpec;
    use super::*;

    fn setup() -> (Track, CarState) {
        let track = Track::new(TrackSpec::stadium(200.0, 40.0, 4.0), 1.8).unwrap();
        let state = CarState {
            x: -80.0,
            y: 40.0,
            heading: 0.0,
            speed: 10.0,
        };
        (track, state)
    }

    #[test]
    fn noiseless_gaze_is_the_lookahead_projection() {
        let (track, state) = setup();
        let cam = Camera::default();
        let oracle = OracleConfig::default();
        let cfg = GazeConfig {
            noise_sigma: 0.0,
            saccade_prob: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = synth_gaze(&track, &state, &cam, &oracle, &cfg, 5, &mut rng);
        let (x, y) = cam.world_to_pixel(&state, lookahead_point(&track, &state, &oracle));
        assert_eq!((g.x, g.y, g.t_ms), (x, y, 5));
    }

    #[test]
    fn gaze_stays_in_frame() {
        let (track, state) = setup();
        let cam = Camera::new(32);
        let cfg = GazeConfig {
            noise_sigma: 50.0,
            saccade_prob: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 0..2000 {
            let g = synth_gaze(&track, &state, &cam, &OracleConfig::default(), &cfg, t, &mut rng);
            assert!(g.x >= 0.0 && g.x < 32.0 && g.y >= 0.0 && g.y < 32.0);
        }
    }

    #[test]
    fn noise_level_matches_sigma() {
        let (track, state) = setup();
        let cam = Camera::default();
        let oracle = OracleConfig::default();
        let cfg = GazeConfig {
            noise_sigma: 5.0,
            saccade_prob: 0.0,
        };
        let (cx, cy) = cam.world_to_pixel(&state, lookahead_point(&track, &state, &oracle));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let g = synth_gaze(&track, &state, &cam, &oracle, &cfg, 0, &mut rng);
            sx += (g.x - cx).powi(2);
            sy += (g.y - cy).powi(2);
        }
        for std in [(sx / n as f64).sqrt(), (sy / n as f64).sqrt()] {
            assert!((std - 5.0).abs() < 0.5, "std {std}");
        }
    }
}
