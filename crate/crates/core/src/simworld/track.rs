use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleKind {
    Building,
    RoadsideObject,
    ParkedCar,
}

/// Axis-aligned static obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub min: Vec2,
    pub max: Vec2,
}

impl Obstacle {
    pub fn centered(kind: ObstacleKind, center: Vec2, half: Vec2) -> Self {
        Obstacle {
            kind,
            min: [center[0] - half[0], center[1] - half[1]],
            max: [center[0] + half[0], center[1] + half[1]],
        }
    }

    pub fn center(&self) -> Vec2 {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    fn perimeter_samples(&self, per_side: usize) -> impl Iterator<Item = Vec2> + '_ {
        (0..=per_side).flat_map(move |i| {
            let t = i as f64 / per_side as f64;
            let x = self.min[0] + t * (self.max[0] - self.min[0]);
            let y = self.min[1] + t * (self.max[1] - self.min[1]);
            [[x, self.min[1]], [x, self.max[1]], [self.min[0], y], [self.max[0], y]]
        })
    }
}

/// A closed road loop. World coordinates are meters with `y` pointing
/// down the screen, so a positive heading change is a right turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    /// Centerline, first waypoint repeated at the end.
    pub waypoints: Vec<Vec2>,
    pub half_width: f64,
    pub obstacles: Vec<Obstacle>,
}

impl TrackSpec {
    pub fn validate(&self, car_width: f64) -> Result<()> {
        let n = self.waypoints.len();
        if n < 4 {
            return Err(Error::invalid("track needs at least three distinct waypoints"));
        }
        if self.waypoints[0] != self.waypoints[n - 1] {
            return Err(Error::invalid("track loop is not closed (first != last waypoint)"));
        }
        if let Some(i) = self.waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("track waypoints {i} and {} coincide", i + 1)));
        }
        if !(self.half_width > car_width / 2.0) {
            return Err(Error::invalid(format!(
                "road half-width {} must exceed half the car width {}",
                self.half_width,
                car_width / 2.0
            )));
        }
        Ok(())
    }

    /// Built-in loop: a three-lobed closed curve (about 650 m) with both left
    /// and right bends, roadside clutter and buildings.
    pub fn default_loop() -> Self {
        let (radius, wobble, n) = (100.0, 0.15, 240);
        let mut waypoints: Vec<Vec2> = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                let r = radius * (1.0 + wobble * (3.0 * t).sin());
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        waypoints.push(waypoints[0]);
        let half_width = 4.0;
        let mut track = TrackSpec {
            name: "default".into(),
            waypoints,
            half_width,
            obstacles: Vec::new(),
        };
        let geometry = Track::geometry_of(&track);
        let kinds = [
            (ObstacleKind::Building, 12.0, [4.0, 4.0]),
            (ObstacleKind::ParkedCar, 1.6, [1.1, 1.1]),
            (ObstacleKind::RoadsideObject, 3.0, [0.6, 0.6]),
        ];
        let mut candidates = Vec::new();
        for (slot, i) in (0..n).step_by(8).enumerate() {
            let a = track.waypoints[i];
            let b = track.waypoints[i + 1];
            let d = sub(b, a);
            let len = norm(d);
            let right = [-d[1] / len, d[0] / len];
            let side = if slot % 2 == 0 { 1.0 } else { -1.0 };
            let (kind, gap, half) = kinds[slot % 3];
            let off = half_width + gap + f64::max(half[0], half[1]);
            let c = [a[0] + side * off * right[0], a[1] + side * off * right[1]];
            candidates.push(Obstacle::centered(kind, c, half));
        }
        track.obstacles = candidates
            .into_iter()
            .filter(|o| {
                o.perimeter_samples(6)
                    .all(|p| geometry.project(p).distance > half_width + 0.5)
            })
            .collect();
        track
    }

    /// A long rounded rectangle; its straights are useful for controller checks.
    pub fn stadium(straight: f64, radius: f64, half_width: f64) -> Self {
        let mut waypoints = Vec::new();
        let arc_steps = 24;
        let straight_steps = (straight / 5.0).ceil() as usize;
        let push_straight = |from: Vec2, to: Vec2, pts: &mut Vec<Vec2>| {
            for k in 0..straight_steps {
                let t = k as f64 / straight_steps as f64;
                pts.push([from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]);
            }
        };
        let half = straight / 2.0;
        // Bottom straight heading +x, then a bend, top straight heading -x, bend.
        push_straight([-half, radius], [half, radius], &mut waypoints);
        for k in 0..arc_steps {
            let a = PI / 2.0 - PI * k as f64 / arc_steps as f64;
            waypoints.push([half + radius * a.cos(), radius * a.sin()]);
        }
        push_straight([half, -radius], [-half, -radius], &mut waypoints);
        for k in 0..arc_steps {
            let a = -PI / 2.0 - PI * k as f64 / arc_steps as f64;
            waypoints.push([-half + radius * a.cos(), radius * a.sin()]);
        }
        waypoints.push(waypoints[0]);
        TrackSpec {
            name: "stadium".into(),
            waypoints,
            half_width,
            obstacles: Vec::new(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default_loop()),
            "stadium" => Ok(Self::stadium(200.0, 40.0, 4.0)),
            other => Err(Error::invalid(format!(
                "unknown track {other:?} (expected default|stadium)"
            ))),
        }
    }
}

/// Nearest-point query result on the centerline.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub point: Vec2,
    /// Arclength of `point` from the first waypoint.
    pub s: f64,
    pub distance: f64,
    /// Signed distance, positive when the query point lies left of the travel direction.
    pub left_offset: f64,
    pub segment: usize,
}

/// Precomputed centerline geometry.
#[derive(Clone, Debug)]
pub struct Geometry {
    pts: Vec<Vec2>,
    cum: Vec<f64>,
    /// Unsigned curvature at each vertex (without the closing duplicate).
    curvature: Vec<f64>,
}

impl Geometry {
    pub fn length(&self) -> f64 {
        *self.cum.last().expect("validated track has segments")
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.pts.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best: Option<Projection> = None;
        for (i, w) in self.pts.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let d = sub(b, a);
            let len2 = dot(d, d);
            let t = (dot(sub(p, a), d) / len2).clamp(0.0, 1.0);
            let q = [a[0] + t * d[0], a[1] + t * d[1]];
            let dist = norm(sub(p, q));
            if best.as_ref().is_none_or(|b| dist < b.distance) {
                let right = [-d[1], d[0]];
                let side = dot(sub(p, q), right);
                best = Some(Projection {
                    point: q,
                    s: self.cum[i] + t * len2.sqrt(),
                    distance: dist,
                    left_offset: if side > 0.0 { -dist } else { dist },
                    segment: i,
                });
            }
        }
        best.expect("validated track has segments")
    }

    /// Centerline point at arclength `s` (wrapped onto the loop).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.rem_euclid(self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => i - 1,
        };
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unit travel direction of the segment containing arclength `s`.
    pub fn direction_at(&self, s: f64) -> Vec2 {
        let s = s.rem_euclid(self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => i - 1,
        };
        let d = sub(self.pts[i + 1], self.pts[i]);
        let n = norm(d);
        [d[0] / n, d[1] / n]
    }

    /// Largest curvature among vertices in `[s, s + preview]`.
    pub fn max_curvature_ahead(&self, s: f64, preview: f64) -> f64 {
        let len = self.length();
        let n = self.curvature.len();
        let s = s.rem_euclid(len);
        let mut worst = 0.0f64;
        for i in 0..n {
            let ahead = (self.cum[i] - s).rem_euclid(len);
            if ahead <= preview {
                worst = worst.max(self.curvature[i]);
            }
        }
        worst
    }
}

/// A validated track with its geometry.
#[derive(Clone, Debug)]
pub struct Track {
    pub spec: TrackSpec,
    pub geometry: Geometry,
}

impl Track {
    pub fn new(spec: TrackSpec, car_width: f64) -> Result<Self> {
        spec.validate(car_width)?;
        let geometry = Self::geometry_of(&spec);
        Ok(Track { spec, geometry })
    }

    fn geometry_of(spec: &TrackSpec) -> Geometry {
        let pts = spec.waypoints.clone();
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + norm(sub(w[1], w[0])));
        }
        let n = pts.len() - 1;
        let curvature = (0..n)
            .map(|i| {
                let a = pts[(i + n - 1) % n];
                let b = pts[i];
                let c = pts[(i + 1) % n];
                menger_curvature(a, b, c)
            })
            .collect();
        Geometry {
            pts,
            cum,
            curvature,
        }
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }
}

fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = sub(b, a);
    let bc = sub(c, b);
    let ca = sub(a, c);
    let cross = (ab[0] * bc[1] - ab[1] * bc[0]).abs();
    let denom = norm(ab) * norm(bc) * norm(ca);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_track_is_valid_and_cluttered() {
        let spec = TrackSpec::default_loop();
        let track = Track::new(spec, 1.8).unwrap();
        assert!(track.geometry.length() > 500.0);
        assert!(track.spec.obstacles.len() >= 10);
        for kind in [ObstacleKind::Building, ObstacleKind::ParkedCar, ObstacleKind::RoadsideObject] {
            assert!(track.spec.obstacles.iter().any(|o| o.kind == kind), "{kind:?}");
        }
    }

    #[test]
    fn validation_errors() {
        let mut spec = TrackSpec::stadium(100.0, 30.0, 4.0);
        assert!(spec.validate(1.8).is_ok());
        spec.half_width = 0.5;
        assert!(spec.validate(1.8).is_err());
        let mut open = TrackSpec::stadium(100.0, 30.0, 4.0);
        open.waypoints.pop();
        assert!(open.validate(1.8).is_err());
        let mut dup = TrackSpec::stadium(100.0, 30.0, 4.0);
        let p = dup.waypoints[3];
        dup.waypoints.insert(3, p);
        assert!(dup.validate(1.8).is_err());
    }

    #[test]
    fn projection_sign_convention() {
        let track = Track::new(TrackSpec::stadium(200.0, 40.0, 4.0), 1.8).unwrap();
        // bottom straight runs along +x at y = 40; left of travel is -y (up the screen)
        let left = track.geometry.project([0.0, 38.0]);
        assert!((left.left_offset - 2.0).abs() < 1e-9);
        let right = track.geometry.project([0.0, 41.0]);
        assert!((right.left_offset + 1.0).abs() < 1e-9);
        assert_eq!(track.geometry.max_curvature_ahead(left.s, 20.0), 0.0);
        let bend = track.geometry.max_curvature_ahead(left.s, 150.0);
        assert!((bend - 1.0 / 40.0).abs() < 1e-3, "{bend}");
    }

    #[test]
    fn point_at_wraps() {
        let track = Track::new(TrackSpec::default_loop(), 1.8).unwrap();
        let g = &track.geometry;
        let a = g.point_at(10.0);
        let b = g.point_at(10.0 + g.length());
        assert!(norm(sub(a, b)) < 1e-9);
        assert!(norm(sub(g.point_at(0.0), track.spec.waypoints[0])) < 1e-12);
    }
}
