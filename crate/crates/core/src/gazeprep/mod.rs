//! From raw sessions to a supervised saliency dataset: gaze/frame
//! alignment, Gaussian saliency targets, central-bias crops and the
//! train/test split.

mod dataset;

use image::imageops;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::{Frame, GazeSample};

pub use dataset::{
    build_dataset, DatasetConfig, DatasetCounts, Provenance, SaliencyDataset, SaliencySample, SampleInfo,
};

/// Frame width at which the pixel constants below are stated.
pub const REFERENCE_WIDTH: f64 = 227.0;
/// Gaze spread, pixels at the reference width.
pub const DEFAULT_SIGMA: f64 = 20.0;
/// Candidate acceptance radius, pixels at the reference width.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

/// Scales a pixel constant stated at 227 px to `width`.
pub fn scaled_to_width(value_at_reference: f64, width: usize) -> f64 {
    value_at_reference * width as f64 / REFERENCE_WIDTH
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Slot weights, reference first, then the preceding samples newest first.
    pub weights: Vec<f64>,
    /// Acceptance radius in pixels at the reference width.
    pub threshold: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            weights: vec![5.0, 4.0, 3.0, 2.0, 1.0],
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("alignment weights must be positive and finite"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::invalid("alignment threshold must be nonnegative"));
        }
        Ok(())
    }
}

/// One gaze point per frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedGaze {
    pub frame_idx: usize,
    pub x: f64,
    pub y: f64,
    /// Samples that entered the weighted mean, the reference included.
    pub accepted_count: usize,
}

/// Collapses the gaze samples around a frame timestamp into one point.
///
/// The reference is the latest sample at or before `frame_t_ms`; the samples
/// just before it are averaged in when they lie within the threshold of the
/// reference. `gaze` must be sorted by time.
pub fn align_gaze_to_frame(
    frame_idx: usize,
    frame_t_ms: u64,
    gaze: &[GazeSample],
    frame_width: usize,
    cfg: &AlignConfig,
) -> Result<AlignedGaze> {
    cfg.validate()?;
    let after = gaze.partition_point(|g| g.t_ms <= frame_t_ms);
    if after == 0 {
        return Err(Error::FrameDropped { frame_t_ms });
    }
    let r = after - 1;
    let reference = gaze[r];
    let threshold = scaled_to_width(cfg.threshold, frame_width);
    let (mut sx, mut sy, mut sw) = (cfg.weights[0] * reference.x, cfg.weights[0] * reference.y, cfg.weights[0]);
    let mut accepted_count = 1;
    for (slot, &w) in cfg.weights.iter().enumerate().skip(1) {
        let Some(i) = r.checked_sub(slot) else { break };
        let c = gaze[i];
        if (c.x - reference.x).hypot(c.y - reference.y) <= threshold {
            sx += w * c.x;
            sy += w * c.y;
            sw += w;
            accepted_count += 1;
        }
    }
    Ok(AlignedGaze {
        frame_idx,
        x: sx / sw,
        y: sy / sw,
        accepted_count,
    })
}

/// A grid of attention values in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(x, y)` of the largest value; the first in scan order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// 8-bit grayscale rendering.
    pub fn to_image(&self) -> image::GrayImage {
        let px = self.values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, px).expect("map size is consistent")
    }
}

/// `exp(-((x - mu_x)^2 + (y - mu_y)^2) / (2 sigma^2))` at every integer pixel.
pub fn gaussian_saliency_map(mu_x: f64, mu_y: f64, sigma: f64, width: usize, height: usize) -> Result<SaliencyMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("saliency sigma must be positive, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let dy2 = (y as f64 - mu_y).powi(2);
        for x in 0..width {
            values.push((-((x as f64 - mu_x).powi(2) + dy2) / denom).exp());
        }
    }
    Ok(SaliencyMap { width, height, values })
}

/// Whether a gaze point lies in the square of side `2 sigma` around the frame
/// center `(width / 2, height / 2)`, boundary included.
pub fn is_central(x: f64, y: f64, sigma: f64, width: usize, height: usize) -> bool {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    (x - cx).abs() <= sigma && (y - cy).abs() <= sigma
}

/// A corner-anchored square crop and the affine map it induces once the crop
/// is rescaled back to the full frame side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerCrop {
    /// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
    pub corner: usize,
    pub origin: (usize, usize),
    pub side: usize,
    /// Full frame side.
    pub width: usize,
}

impl CornerCrop {
    pub fn scale(&self) -> f64 {
        self.width as f64 / self.side as f64
    }

    /// Frame coordinates to rescaled-crop coordinates.
    pub fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        ((x - self.origin.0 as f64) * s, (y - self.origin.1 as f64) * s)
    }

    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        (x / s + self.origin.0 as f64, y / s + self.origin.1 as f64)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (ox, oy) = (self.origin.0 as f64, self.origin.1 as f64);
        let side = self.side as f64;
        x >= ox && x < ox + side && y >= oy && y < oy + side
    }

    /// Crops `frame` and resamples the crop (bilinear) to `out_side`.
    pub fn apply(&self, frame: &Frame, out_side: usize) -> Frame {
        let img = frame.to_image();
        let crop = imageops::crop_imm(&img, self.origin.0 as u32, self.origin.1 as u32, self.side as u32, self.side as u32)
            .to_image();
        let out = imageops::resize(&crop, out_side as u32, out_side as u32, imageops::FilterType::Triangle);
        Frame::from_image(frame.t_ms, out)
    }
}

/// The four corner crops of side `round(width - margin_sigmas * sigma)`.
pub fn corner_crops(width: usize, sigma: f64, margin_sigmas: f64) -> Result<[CornerCrop; 4]> {
    let side = (width as f64 - margin_sigmas * sigma).round();
    if !(side >= 1.0) || side > width as f64 {
        return Err(Error::invalid(format!(
            "corner crop side {side} is degenerate for width {width}, sigma {sigma}"
        )));
    }
    let side = side as usize;
    let far = width - side;
    let origins = [(0, 0), (far, 0), (0, far), (far, far)];
    Ok(std::array::from_fn(|corner| CornerCrop {
        corner,
        origin: origins[corner],
        side,
        width,
    }))
}

/// One central-bias crop of a frame, at the frame's own resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub crop: CornerCrop,
    pub frame: Frame,
    pub gaze: (f64, f64),
    pub target: SaliencyMap,
}

/// Corner crops of a frame whose gaze is central; nothing otherwise.
///
/// Each crop is rescaled to the frame side and gets a fresh Gaussian target
/// at the transformed gaze, with the same `sigma`.
pub fn central_bias_augment(
    frame: &Frame,
    gaze: (f64, f64),
    sigma: f64,
    margin_sigmas: f64,
) -> Result<Vec<AugmentedSample>> {
    let w = frame.width;
    let crops = corner_crops(w, sigma, margin_sigmas)?;
    if !is_central(gaze.0, gaze.1, sigma, w, frame.height) {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(4);
    for crop in crops {
        if !crop.contains(gaze.0, gaze.1) {
            continue;
        }
        let g = crop.forward(gaze.0, gaze.1);
        out.push(AugmentedSample {
            crop,
            frame: crop.apply(frame, w),
            gaze: g,
            target: gaussian_saliency_map(g.0, g.1, sigma, w, w)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(t_ms: u64, x: f64, y: f64) -> GazeSample {
        GazeSample { t_ms, x, y }
    }

    #[test]
    fn alignment_examples() {
        let cfg = AlignConfig::default();
        let same: Vec<_> = (0..5).map(|i| g(i * 20, 100.0, 50.0)).collect();
        let a = align_gaze_to_frame(0, 100, &same, 227, &cfg).unwrap();
        assert_eq!((a.x, a.y, a.accepted_count), (100.0, 50.0, 5));

        let far = vec![g(0, 0.0, 0.0), g(20, 200.0, 0.0), g(40, 0.0, 200.0), g(60, 200.0, 200.0), g(80, 101.0, 77.0)];
        let a = align_gaze_to_frame(0, 85, &far, 227, &cfg).unwrap();
        assert_eq!((a.x, a.y, a.accepted_count), (101.0, 77.0, 1));

        // oldest first: slots 4, 3, 2, 1, reference
        let mixed = vec![
            g(10, 100.0, 108.0),
            g(30, 200.0, 200.0),
            g(50, 96.0, 100.0),
            g(70, 104.0, 100.0),
            g(90, 100.0, 100.0),
            g(110, 0.0, 0.0),
        ];
        let a = align_gaze_to_frame(3, 95, &mixed, 227, &cfg).unwrap();
        assert!((a.x - 1304.0 / 13.0).abs() < 1e-12);
        assert!((a.y - 1308.0 / 13.0).abs() < 1e-12);
        assert_eq!((a.frame_idx, a.accepted_count), (3, 4));
    }

    #[test]
    fn alignment_needs_a_prior_sample() {
        let err = align_gaze_to_frame(0, 5, &[g(6, 1.0, 1.0)], 227, &AlignConfig::default()).unwrap_err();
        assert!(matches!(err, Error::FrameDropped { frame_t_ms: 5 }));
        let a = align_gaze_to_frame(0, 6, &[g(6, 1.0, 1.0)], 227, &AlignConfig::default()).unwrap();
        assert_eq!(a.accepted_count, 1);
    }

    #[test]
    fn gaussian_values() {
        let m = gaussian_saliency_map(10.0, 12.0, 20.0, 64, 64).unwrap();
        assert_eq!(m.value(10, 12), 1.0);
        assert_eq!(m.argmax(), (10, 12));
        // squared distance 2 sigma^2 = 800 = 20^2 + 20^2
        assert!((m.value(30, 32) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((m.value(50, 12) - (-2.0f64).exp()).abs() < 1e-12);
        assert!(gaussian_saliency_map(0.0, 0.0, 0.0, 4, 4).is_err());
    }

    #[test]
    fn central_square() {
        assert!(is_central(113.5, 113.5, 20.0, 227, 227));
        assert!(!is_central(10.0, 10.0, 20.0, 227, 227));
        assert!(is_central(133.5, 113.5, 20.0, 227, 227));
        assert!(!is_central(133.6, 113.5, 20.0, 227, 227));
    }

    #[test]
    fn two_sigma_margin_arithmetic() {
        let crops = corner_crops(227, 20.0, 2.0).unwrap();
        assert_eq!(crops[0].side, 187);
        let (x, y) = crops[0].forward(113.5, 113.5);
        assert!((x - 137.78).abs() < 0.01 && (y - 137.78).abs() < 0.01);
        assert!(!is_central(x, y, 20.0, 227, 227));
    }

    #[test]
    fn two_sigma_margin_can_leave_gaze_central() {
        // A central gaze near the top-left corner of the central square maps
        // back to the center under the top-left crop of side width - 2 sigma.
        let crops = corner_crops(227, 20.0, 2.0).unwrap();
        let (x, y) = crops[0].forward(93.5, 93.5);
        assert!(is_central(x, y, 20.0, 227, 227));
    }

    #[test]
    fn four_sigma_margin_always_leaves_center() {
        let crops = corner_crops(227, 20.0, 4.0).unwrap();
        assert_eq!(crops[3].origin, (80, 80));
        let steps = 41;
        for i in 0..steps {
            for j in 0..steps {
                let x = 93.5 + 40.0 * i as f64 / (steps - 1) as f64;
                let y = 93.5 + 40.0 * j as f64 / (steps - 1) as f64;
                for c in &crops {
                    assert!(c.contains(x, y));
                    let (u, v) = c.forward(x, y);
                    assert!(!is_central(u, v, 20.0, 227, 227), "{x},{y} corner {}", c.corner);
                    let (bx, by) = c.inverse(u, v);
                    assert!((bx - x).abs() < 0.5 && (by - y).abs() < 0.5);
                }
            }
        }
    }

    #[test]
    fn augment_counts() {
        let frame = Frame::new(0, 64, 64, vec![128; 64 * 64 * 3]).unwrap();
        let sigma = scaled_to_width(DEFAULT_SIGMA, 64);
        assert!(central_bias_augment(&frame, (3.0, 3.0), sigma, 4.0).unwrap().is_empty());
        let crops = central_bias_augment(&frame, (32.0, 30.0), sigma, 4.0).unwrap();
        assert_eq!(crops.len(), 4);
        for c in &crops {
            assert_eq!((c.frame.width, c.target.width), (64, 64));
            assert!(!is_central(c.gaze.0, c.gaze.1, sigma, 64, 64));
        }
        assert!(corner_crops(64, 40.0, 4.0).is_err());
    }
}
