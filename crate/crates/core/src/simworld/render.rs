use image::{imageops, RgbImage};
use serde::{Deserialize, Serialize};

use super::track::{dot, norm, sub, ObstacleKind, Track, Vec2};
use super::CarState;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub mod palette {
    use super::ObstacleKind;

    pub const ASPHALT: [u8; 3] = [88, 88, 94];
    pub const EDGE_LINE: [u8; 3] = [236, 236, 236];
    pub const GRASS: [u8; 3] = [58, 128, 62];
    pub const BUILDING: [u8; 3] = [150, 78, 60];
    pub const ROADSIDE_OBJECT: [u8; 3] = [226, 196, 40];
    pub const PARKED_CAR: [u8; 3] = [40, 84, 200];
    pub const SPEED_BAR: [u8; 3] = [226, 64, 200];

    pub fn obstacle(kind: ObstacleKind) -> [u8; 3] {
        match kind {
            ObstacleKind::Building => BUILDING,
            ObstacleKind::RoadsideObject => ROADSIDE_OBJECT,
            ObstacleKind::ParkedCar => PARKED_CAR,
        }
    }
}

/// Width of the painted edge line, drawn just outside the asphalt.
const EDGE_LINE_WIDTH: f64 = 0.3;

/// Speed at which the speedometer bar spans the whole frame width, m/s.
pub const SPEED_BAR_FULL_SCALE: f64 = 20.0;

/// Rows covered by the speedometer bar at the top of the frame.
pub fn speed_bar_rows(width: usize) -> usize {
    (width as f64 / 57.0).round().max(2.0) as usize
}

/// Whether pixel column `x` is lit by the speedometer bar. The bar grows
/// symmetrically out of the top-center.
pub fn speed_bar_covers(width: usize, speed: f64, x: usize) -> bool {
    let half = (speed / SPEED_BAR_FULL_SCALE).clamp(0.0, 1.0) * width as f64 / 2.0;
    (x as f64 + 0.5 - width as f64 / 2.0).abs() < half
}

/// A square top-down camera pinned to the car: the car sits at the
/// bottom-center pixel facing up the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Side of the square frame in pixels.
    pub width: usize,
    /// Meters covered by the frame side.
    pub view_span: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            width: 227,
            view_span: 36.0,
        }
    }
}

impl Camera {
    pub fn new(width: usize) -> Self {
        Camera {
            width,
            ..Camera::default()
        }
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.view_span / self.width as f64
    }

    fn center_column(&self) -> f64 {
        (self.width as f64 - 1.0) / 2.0
    }

    /// World position seen at pixel center `(x, y)` (column, row).
    pub fn pixel_to_world(&self, state: &CarState, x: f64, y: f64) -> Vec2 {
        let s = self.meters_per_pixel();
        let lateral = (x - self.center_column()) * s;
        let ahead = (self.width as f64 - 1.0 - y) * s;
        let (f, r) = (state.forward(), state.right());
        [
            state.x + ahead * f[0] + lateral * r[0],
            state.y + ahead * f[1] + lateral * r[1],
        ]
    }

    /// Pixel coordinates (column, row) of a world point; may fall outside the frame.
    pub fn world_to_pixel(&self, state: &CarState, p: Vec2) -> (f64, f64) {
        let s = self.meters_per_pixel();
        let rel = sub(p, state.position());
        let ahead = dot(rel, state.forward());
        let lateral = dot(rel, state.right());
        (
            lateral / s + self.center_column(),
            self.width as f64 - 1.0 - ahead / s,
        )
    }
}

/// An 8-bit RGB frame. Channel values map to [0, 1] by dividing by 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub t_ms: u64,
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn new(t_ms: u64, width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != width * height * 3 {
            return Err(Error::shape("frame", &[height, width, 3], &[rgb.len()]));
        }
        Ok(Frame {
            t_ms,
            width,
            height,
            rgb,
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// `H x W x 3` tensor with values in [0, 1].
    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self.rgb.iter().map(|&v| v as f32 / 255.0).collect();
        Tensor::new(vec![self.height, self.width, 3], data).expect("frame buffer size checked on construction")
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.rgb.clone())
            .expect("frame buffer size checked on construction")
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.to_image()
            .write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
            .map_err(|e| Error::image("<memory>", e))?;
        Ok(out)
    }

    pub fn from_image(t_ms: u64, img: RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Frame {
            t_ms,
            width: w as usize,
            height: h as usize,
            rgb: img.into_raw(),
        }
    }

    /// Bilinear (triangle-filter) resize to a `side x side` frame.
    pub fn resized(&self, side: usize) -> Frame {
        if side == self.width && side == self.height {
            return self.clone();
        }
        let img = imageops::resize(
            &self.to_image(),
            side as u32,
            side as u32,
            imageops::FilterType::Triangle,
        );
        Frame::from_image(self.t_ms, img)
    }
}

/// Renders the scene in front of the car.
///
/// Each pixel takes the color of the world point under its center:
/// obstacles, then asphalt within the road half-width, the edge line just
/// outside it, and grass elsewhere.
pub fn render_frame(track: &Track, state: &CarState, camera: &Camera, t_ms: u64) -> Frame {
    let w = camera.width;
    let s = camera.meters_per_pixel();
    let half_width = track.half_width();
    let reach = half_width + EDGE_LINE_WIDTH + 1.0;

    // Only segments that can come within `reach` of the visible square matter.
    let view_center = camera.pixel_to_world(state, camera.center_column(), camera.center_column());
    let radius = camera.view_span * std::f64::consts::FRAC_1_SQRT_2 + s + reach;
    let segments: Vec<(Vec2, Vec2, f64)> = track
        .geometry
        .segments()
        .filter(|&(a, b)| point_segment_distance(view_center, a, b) <= radius)
        .map(|(a, b)| {
            let d = sub(b, a);
            (a, d, dot(d, d))
        })
        .collect();
    let obstacles: Vec<_> = track
        .spec
        .obstacles
        .iter()
        .filter(|o| {
            let c = o.center();
            let half = norm(sub(o.max, c));
            norm(sub(c, view_center)) <= radius + half
        })
        .collect();

    let bar_rows = speed_bar_rows(w);
    let mut rgb = Vec::with_capacity(w * w * 3);
    for y in 0..w {
        for x in 0..w {
            let p = camera.pixel_to_world(state, x as f64, y as f64);
            let color = if y < bar_rows && speed_bar_covers(w, state.speed, x) {
                palette::SPEED_BAR
            } else if let Some(o) = obstacles.iter().find(|o| o.contains(p)) {
                palette::obstacle(o.kind)
            } else {
                let mut best2 = f64::INFINITY;
                for &(a, d, len2) in &segments {
                    let ap = sub(p, a);
                    let t = (dot(ap, d) / len2).clamp(0.0, 1.0);
                    let e = [ap[0] - t * d[0], ap[1] - t * d[1]];
                    best2 = best2.min(dot(e, e));
                }
                let dist = best2.sqrt();
                if dist <= half_width {
                    palette::ASPHALT
                } else if dist <= half_width + EDGE_LINE_WIDTH {
                    palette::EDGE_LINE
                } else {
                    palette::GRASS
                }
            };
            rgb.extend_from_slice(&color);
        }
    }
    Frame {
        t_ms,
        width: w,
        height: w,
        rgb,
    }
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = sub(b, a);
    let t = (dot(sub(p, a), d) / dot(d, d)).clamp(0.0, 1.0);
    norm(sub(p, [a[0] + t * d[0], a[1] + t * d[1]]))
}
