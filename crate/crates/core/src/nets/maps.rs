use crate::diffcore::{elementwise_mul, Real, Tensor};
use crate::error::{Error, Result};

pub const NORMALIZE_EPS: f64 = 1e-6;

/// Clamps negatives to zero and divides by the maximum, so the peak is 1.
/// A map with no positive mass stays all zero.
pub fn normalize_map<T: Real>(map: &Tensor<T>) -> Tensor<T> {
    let clamped = map.map(|v| if v > T::zero() { v } else { T::zero() });
    let peak = clamped.max_value().as_f64().max(NORMALIZE_EPS);
    let inv = T::real(1.0 / peak);
    clamped.map(|v| v * inv)
}

fn map_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w] => Ok((1, h, w)),
        [n, h, w] => Ok((n, h, w)),
        _ => Err(Error::invalid(format!("expected an H x W or N x H x W map, got {shape:?}"))),
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Only enlarges (or keeps) the map; the result never leaves the input's
/// value range.
pub fn upsample_map<T: Real>(map: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (n, h, w) = map_dims(map.shape())?;
    if h == 0 || w == 0 || height < h || width < w {
        return Err(Error::invalid(format!(
            "cannot upsample a {h}x{w} map to {height}x{width}"
        )));
    }
    let axis = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let rows = axis(height, h);
    let cols = axis(width, w);
    let src = map.data();
    let mut out = Vec::with_capacity(n * height * width);
    for b in 0..n {
        let plane = &src[b * h * w..(b + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let at = |y: usize, x: usize| plane[y * w + x].as_f64();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(T::real(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    let shape = if map.shape().len() == 2 {
        vec![height, width]
    } else {
        vec![n, height, width]
    };
    Tensor::new(shape, out)
}

/// Multiplies every channel of the image by the map, resizing the map to the
/// image first when it is smaller.
pub fn incorporate_saliency<T: Real>(image: &Tensor<T>, map: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = match *image.shape() {
        [h, w, _] | [_, h, w, _] => (h, w),
        _ => return Err(Error::shape("incorporate_saliency", &[0, 0, 3], image.shape())),
    };
    let (_, mh, mw) = map_dims(map.shape())?;
    if (mh, mw) == (h, w) {
        elementwise_mul(image, map)
    } else {
        elementwise_mul(image, &upsample_map(map, h, w)?)
    }
}
