//! Forward and backward passes for the operator set used by the networks.
//!
//! Image tensors are laid out `H x W x C` (a single image) or `N x H x W x C`
//! (a batch); vector operators accept `n` or `N x n`. Every `*_forward`
//! returns the output together with whatever its backward pass needs.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Zero padding, output keeps the input's spatial size.
    Same,
    /// Wrap-around padding, output keeps the input's spatial size.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

#[derive(Clone, Copy, Debug)]
struct ImageDims {
    batched: bool,
    n: usize,
    h: usize,
    w: usize,
    c: usize,
}

fn image_dims(op: &'static str, shape: &[usize]) -> Result<ImageDims> {
    match *shape {
        [h, w, c] => Ok(ImageDims {
            batched: false,
            n: 1,
            h,
            w,
            c,
        }),
        [n, h, w, c] => Ok(ImageDims {
            batched: true,
            n,
            h,
            w,
            c,
        }),
        _ => Err(Error::shape(op, shape, &[0, 0, 0])),
    }
}

fn image_shape(batched: bool, n: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if batched {
        vec![n, h, w, c]
    } else {
        vec![h, w, c]
    }
}

/// Splits a vector-operator input into (rows, row length).
fn vector_dims(op: &'static str, shape: &[usize]) -> Result<(bool, usize, usize)> {
    match *shape {
        [len] => Ok((false, 1, len)),
        [n, len] => Ok((true, n, len)),
        _ => Err(Error::shape(op, shape, &[0])),
    }
}

fn vector_shape(batched: bool, n: usize, len: usize) -> Vec<usize> {
    if batched {
        vec![n, len]
    } else {
        vec![len]
    }
}

// ---------------------------------------------------------------------------
// conv2d

#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    img: ImageDims,
    kh: usize,
    kw: usize,
    f: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
    padding: Padding,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.img.c
    }

    fn rows(&self) -> usize {
        self.img.n * self.oh * self.ow
    }

    /// Input row/column feeding output coordinate `o` through tap `d`.
    fn source(&self, o: usize, d: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = o as isize + d as isize - pad as isize;
        match self.padding {
            Padding::Periodic => Some(pos.rem_euclid(extent as isize) as usize),
            _ if pos < 0 || pos >= extent as isize => None,
            _ => Some(pos as usize),
        }
    }
}

/// Saved state of a convolution forward pass (the unrolled input patches).
#[derive(Clone, Debug)]
pub struct Conv2dCache<T> {
    geom: ConvGeometry,
    cols: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

fn conv_geometry<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<ConvGeometry> {
    let img = image_dims("conv2d", input.shape())?;
    let (kh, kw, kc, f) = match *kernels.shape() {
        [kh, kw, kc, f] => (kh, kw, kc, f),
        _ => return Err(Error::shape("conv2d", input.shape(), kernels.shape())),
    };
    if kc != img.c {
        return Err(Error::shape("conv2d", input.shape(), kernels.shape()));
    }
    if bias.shape() != [f] {
        return Err(Error::shape("conv2d", kernels.shape(), bias.shape()));
    }
    let (oh, ow, pad_top, pad_left) = match padding {
        Padding::Valid => {
            if kh > img.h || kw > img.w {
                return Err(Error::shape("conv2d", input.shape(), kernels.shape()));
            }
            (img.h - kh + 1, img.w - kw + 1, 0, 0)
        }
        Padding::Same | Padding::Periodic => (img.h, img.w, (kh - 1) / 2, (kw - 1) / 2),
    };
    Ok(ConvGeometry {
        img,
        kh,
        kw,
        f,
        oh,
        ow,
        pad_top,
        pad_left,
        padding,
    })
}

const NO_TAP: usize = usize::MAX;

/// Source index for every (output coordinate, tap) pair, `NO_TAP` where the
/// tap falls in zero padding. Indexed `o * taps + d`.
fn tap_table(g: &ConvGeometry, outputs: usize, taps: usize, pad: usize, extent: usize) -> Vec<usize> {
    let mut table = Vec::with_capacity(outputs * taps);
    for o in 0..outputs {
        for d in 0..taps {
            table.push(g.source(o, d, pad, extent).unwrap_or(NO_TAP));
        }
    }
    table
}

/// Calls `f(row, patch_offset, input_offset, len)` for every contiguous run
/// linking an unrolled patch to the input, in row order.
fn for_each_run(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize, usize)) {
    let c = g.img.c;
    let ys = tap_table(g, g.oh, g.kh, g.pad_top, g.img.h);
    let xs = tap_table(g, g.ow, g.kw, g.pad_left, g.img.w);
    let mut row = 0;
    for b in 0..g.img.n {
        let base = b * g.img.h * g.img.w * c;
        for oy in 0..g.oh {
            let yt = &ys[oy * g.kh..(oy + 1) * g.kh];
            for ox in 0..g.ow {
                let xt = &xs[ox * g.kw..(ox + 1) * g.kw];
                let whole = xt[0] != NO_TAP && xt[g.kw - 1] == xt[0] + g.kw - 1;
                for (dy, &iy) in yt.iter().enumerate() {
                    if iy == NO_TAP {
                        continue;
                    }
                    let line = base + iy * g.img.w * c;
                    if whole {
                        f(row, dy * g.kw * c, line + xt[0] * c, g.kw * c);
                        continue;
                    }
                    for (dx, &ix) in xt.iter().enumerate() {
                        if ix != NO_TAP {
                            f(row, (dy * g.kw + dx) * c, line + ix * c, c);
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn im2col<T: Real>(g: &ConvGeometry, input: &[T]) -> Vec<T> {
    let k = g.patch_len();
    let mut cols = vec![T::zero(); g.rows() * k];
    for_each_run(g, |row, off, src, len| {
        let at = row * k + off;
        cols[at..at + len].copy_from_slice(&input[src..src + len]);
    });
    cols
}

fn col2im<T: Real>(g: &ConvGeometry, dcols: &[T]) -> Vec<T> {
    let k = g.patch_len();
    let mut out = vec![T::zero(); g.img.n * g.img.h * g.img.w * g.img.c];
    for_each_run(g, |row, off, dst, len| {
        let at = row * k + off;
        for (o, &d) in out[dst..dst + len].iter_mut().zip(&dcols[at..at + len]) {
            *o = *o + d;
        }
    });
    out
}

/// Stride-1 convolution. `kernels` is `kh x kw x C x F`, `bias` is `F`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    let g = conv_geometry(input, kernels, bias, padding)?;
    let cols = im2col(&g, input.data());
    let rows = g.rows();
    let k = g.patch_len();
    let mut out = Vec::with_capacity(rows * g.f);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(
        MatRef::new(&cols, rows, k),
        MatRef::new(kernels.data(), k, g.f),
        T::one(),
        &mut out,
    );
    let out = Tensor::new(image_shape(g.img.batched, g.img.n, g.oh, g.ow, g.f), out)?;
    Ok((out, Conv2dCache { geom: g, cols }))
}

pub fn conv2d_backward<T: Real>(
    cache: &Conv2dCache<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<Conv2dGrads<T>> {
    let g = &cache.geom;
    let rows = g.rows();
    let k = g.patch_len();
    if grad_out.len() != rows * g.f {
        return Err(Error::shape(
            "conv2d_backward",
            &image_shape(g.img.batched, g.img.n, g.oh, g.ow, g.f),
            grad_out.shape(),
        ));
    }
    let dout = MatRef::new(grad_out.data(), rows, g.f);

    let mut dk = vec![T::zero(); k * g.f];
    gemm(MatRef::new(&cache.cols, rows, k).t(), dout, T::zero(), &mut dk);

    let mut db = vec![T::zero(); g.f];
    for r in grad_out.data().chunks_exact(g.f) {
        for (acc, &v) in db.iter_mut().zip(r) {
            *acc = *acc + v;
        }
    }

    let input = if want_input {
        let mut dcols = vec![T::zero(); rows * k];
        gemm(dout, MatRef::new(kernels.data(), k, g.f).t(), T::zero(), &mut dcols);
        let dx = col2im(g, &dcols);
        Some(Tensor::new(
            image_shape(g.img.batched, g.img.n, g.img.h, g.img.w, g.img.c),
            dx,
        )?)
    } else {
        None
    };
    Ok(Conv2dGrads {
        input,
        kernels: Tensor::new(kernels.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![g.f], db)?,
    })
}

pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    conv2d_forward(input, kernels, bias, padding).map(|(out, _)| out)
}

// ---------------------------------------------------------------------------
// maxpool

/// Argmax bookkeeping of a pooling or pairwise-max pass.
#[derive(Clone, Debug)]
pub struct ArgmaxCache {
    input_shape: Vec<usize>,
    winners: Vec<usize>,
}

/// Routes each output gradient to the input element that won its max.
pub fn argmax_backward<T: Real>(cache: &ArgmaxCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != cache.winners.len() {
        return Err(Error::shape(
            "max_backward",
            &[cache.winners.len()],
            grad_out.shape(),
        ));
    }
    let mut dx = Tensor::zeros(cache.input_shape.clone());
    let d = dx.data_mut();
    for (&idx, &g) in cache.winners.iter().zip(grad_out.data()) {
        d[idx] = d[idx] + g;
    }
    Ok(dx)
}

/// 2x2 max pooling with stride 2. Ties go to the first window cell in scan order.
pub fn maxpool2x2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, ArgmaxCache)> {
    let d = image_dims("maxpool2x2", input.shape())?;
    if d.h % 2 != 0 || d.w % 2 != 0 {
        return Err(Error::invalid(format!(
            "maxpool2x2 needs even height and width, got {:?}",
            input.shape()
        )));
    }
    let (oh, ow, c) = (d.h / 2, d.w / 2, d.c);
    let x = input.data();
    let mut out = Vec::with_capacity(d.n * oh * ow * c);
    let mut winners = Vec::with_capacity(out.capacity());
    for b in 0..d.n {
        let base = b * d.h * d.w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = base + ((2 * oy) * d.w + 2 * ox) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * oy + dy) * d.w + 2 * ox + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    winners.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::new(image_shape(d.batched, d.n, oh, ow, c), out)?,
        ArgmaxCache {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

pub fn maxpool2x2<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    maxpool2x2_forward(input).map(|(out, _)| out)
}

// ---------------------------------------------------------------------------
// pairwise max

/// Max over adjacent disjoint pairs `(2i, 2i + 1)` of each row.
pub fn pairwise_max_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, ArgmaxCache)> {
    let (batched, n, len) = vector_dims("pairwise_max", input.shape())?;
    if len % 2 != 0 {
        return Err(Error::invalid(format!(
            "pairwise_max needs an even length, got {len}"
        )));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(x.len() / 2);
    let mut winners = Vec::with_capacity(x.len() / 2);
    for i in 0..n * len / 2 {
        let (a, b) = (2 * i, 2 * i + 1);
        let w = if x[b] > x[a] { b } else { a };
        out.push(x[w]);
        winners.push(w);
    }
    Ok((
        Tensor::new(vector_shape(batched, n, len / 2), out)?,
        ArgmaxCache {
            input_shape: input.shape().to_vec(),
            winners,
        },
    ))
}

pub fn pairwise_max<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    pairwise_max_forward(input).map(|(out, _)| out)
}

// ---------------------------------------------------------------------------
// activations

pub fn apply_activation<T: Real>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Linear => x.clone(),
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    // Split on sign so neither branch can overflow exp.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Gradient of an activation, expressed through its forward output.
pub fn activation_backward<T: Real>(
    kind: Activation,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape(
            "activation_backward",
            output.shape(),
            grad_out.shape(),
        ));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| match kind {
            Activation::Relu => {
                if y > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => g * y * (T::one() - y),
            Activation::Linear => g,
        })
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

// ---------------------------------------------------------------------------
// dense

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn dense_dims<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(bool, usize, usize, usize)> {
    let (batched, rows, n) = vector_dims("dense", input.shape())?;
    let m = match *weights.shape() {
        [wn, m] if wn == n => m,
        _ => return Err(Error::shape("dense", input.shape(), weights.shape())),
    };
    if bias.shape() != [m] {
        return Err(Error::shape("dense", weights.shape(), bias.shape()));
    }
    Ok((batched, rows, n, m))
}

/// `out_j = sum_i in_i * W_ij + b_j`; `weights` is `n x m`.
pub fn dense<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batched, rows, n, m) = dense_dims(input, weights, bias)?;
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(
        MatRef::new(input.data(), rows, n),
        MatRef::new(weights.data(), n, m),
        T::one(),
        &mut out,
    );
    Tensor::new(vector_shape(batched, rows, m), out)
}

pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<DenseGrads<T>> {
    let (_, rows, n) = vector_dims("dense_backward", input.shape())?;
    let m = match *weights.shape() {
        [wn, m] if wn == n => m,
        _ => return Err(Error::shape("dense_backward", input.shape(), weights.shape())),
    };
    if grad_out.len() != rows * m {
        return Err(Error::shape("dense_backward", &[rows, m], grad_out.shape()));
    }
    let x = MatRef::new(input.data(), rows, n);
    let dy = MatRef::new(grad_out.data(), rows, m);

    let mut dw = vec![T::zero(); n * m];
    gemm(x.t(), dy, T::zero(), &mut dw);
    let mut db = vec![T::zero(); m];
    for r in grad_out.data().chunks_exact(m) {
        for (acc, &v) in db.iter_mut().zip(r) {
            *acc = *acc + v;
        }
    }
    let input_grad = if want_input {
        let mut dx = vec![T::zero(); rows * n];
        gemm(dy, MatRef::new(weights.data(), n, m).t(), T::zero(), &mut dx);
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    };
    Ok(DenseGrads {
        input: input_grad,
        weights: Tensor::new(vec![n, m], dw)?,
        bias: Tensor::new(vec![m], db)?,
    })
}

// ---------------------------------------------------------------------------
// elementwise multiply

/// How `b` lines up against `a` in [`elementwise_mul`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MulLayout {
    Same,
    /// `b` lacks (or has a unit) trailing channel axis and is repeated across `a`'s channels.
    Broadcast { channels: usize },
}

fn mul_layout(a: &[usize], b: &[usize]) -> Result<MulLayout> {
    if a == b {
        return Ok(MulLayout::Same);
    }
    let b_trim = match b.split_last() {
        Some((1, rest)) if rest.len() + 1 == a.len() => rest,
        _ => b,
    };
    match a.split_last() {
        Some((&c, rest)) if rest == b_trim && !rest.is_empty() => {
            Ok(MulLayout::Broadcast { channels: c })
        }
        _ => Err(Error::shape("elementwise_mul", a, b)),
    }
}

/// Elementwise product; an `H x W` map multiplies every channel of an `H x W x C` image.
pub fn elementwise_mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let data = match mul_layout(a.shape(), b.shape())? {
        MulLayout::Same => a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
        MulLayout::Broadcast { channels } => a
            .data()
            .chunks_exact(channels)
            .zip(b.data())
            .flat_map(|(px, &m)| px.iter().map(move |&x| x * m))
            .collect(),
    };
    Tensor::new(a.shape().to_vec(), data)
}

/// Returns `(d/da, d/db)`; the map gradient sums over channels.
pub fn elementwise_mul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if grad_out.shape() != a.shape() {
        return Err(Error::shape("elementwise_mul_backward", a.shape(), grad_out.shape()));
    }
    match mul_layout(a.shape(), b.shape())? {
        MulLayout::Same => {
            let da = b.data().iter().zip(grad_out.data()).map(|(&y, &g)| y * g).collect();
            let db = a.data().iter().zip(grad_out.data()).map(|(&x, &g)| x * g).collect();
            Ok((
                Tensor::new(a.shape().to_vec(), da)?,
                Tensor::new(b.shape().to_vec(), db)?,
            ))
        }
        MulLayout::Broadcast { channels } => {
            let mut da = Vec::with_capacity(a.len());
            let mut db = Vec::with_capacity(b.len());
            for ((px, gs), &m) in a
                .data()
                .chunks_exact(channels)
                .zip(grad_out.data().chunks_exact(channels))
                .zip(b.data())
            {
                let mut acc = T::zero();
                for (&x, &g) in px.iter().zip(gs) {
                    da.push(m * g);
                    acc = acc + x * g;
                }
                db.push(acc);
            }
            Ok((
                Tensor::new(a.shape().to_vec(), da)?,
                Tensor::new(b.shape().to_vec(), db)?,
            ))
        }
    }
}
