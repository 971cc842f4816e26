//! Central finite-difference verification of every operator's backward pass.
//!
//! Each check draws a random instance in double precision, reduces the
//! operator output to a scalar `L = sum_i w_i * y_i` with random weights, and
//! compares the analytic gradient against `(L(x + h) - L(x - h)) / 2h`.
//! Inputs are drawn away from the kinks (relu at 0, ties in a max).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{action_mse, attention_sparsity, cosine_loss, SparsityVariant};
use super::ops::*;
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor, so entries whose gradient vanishes compare absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOutcome {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < MAX_REL_ERR
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Max relative error of `analytic` against central differences of `f` at `x`.
pub fn compare_with_finite_differences(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).expect("generated data matches shape")
}

/// Values that stay clear of zero by at least `gap`.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(gap..1.5);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Distinct values with pairwise gaps far wider than the difference step.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(rng);
    ranks
        .into_iter()
        .map(|r| r as f64 * 0.05 - n as f64 * 0.025 + rng.random_range(0.0..0.01))
        .collect()
}

fn weighted(y: &Tensor<f64>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn conv_instance(rng: &mut ChaCha8Rng, padding: Padding) -> Result<f64> {
    let (h, w, c, k, f) = (8, 8, 2, 3, 4);
    let x = uniform(rng, h * w * c, -1.0, 1.0);
    let kern = uniform(rng, k * k * c * f, -1.0, 1.0);
    let bias = uniform(rng, f, -1.0, 1.0);
    let xs = [h, w, c];
    let ks = [k, k, c, f];
    let (y, cache) = conv2d_forward(&tensor(&xs, x.clone()), &tensor(&ks, kern.clone()), &tensor(&[f], bias.clone()), padding)?;
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let g = conv2d_backward(&cache, &tensor(&ks, kern.clone()), &tensor(y.shape(), wts.clone()), true)?;

    let eval = |x: &[f64], kern: &[f64], bias: &[f64]| {
        let y = conv2d(&tensor(&xs, x.to_vec()), &tensor(&ks, kern.to_vec()), &tensor(&[f], bias.to_vec()), padding)
            .expect("shapes fixed");
        weighted(&y, &wts)
    };
    let gi = g.input.expect("input gradient requested");
    let e1 = compare_with_finite_differences(|p| eval(p, &kern, &bias), &x, gi.data());
    let e2 = compare_with_finite_differences(|p| eval(&x, p, &bias), &kern, g.kernels.data());
    let e3 = compare_with_finite_differences(|p| eval(&x, &kern, p), &bias, g.bias.data());
    Ok(e1.max(e2).max(e3))
}

fn maxpool_instance(rng: &mut ChaCha8Rng) -> Result<f64> {
    let shape = [6, 6, 3];
    let x = distinct(rng, 108);
    let (y, cache) = maxpool2x2_forward(&tensor(&shape, x.clone()))?;
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let g = argmax_backward(&cache, &tensor(y.shape(), wts.clone()))?;
    Ok(compare_with_finite_differences(
        |p| weighted(&maxpool2x2(&tensor(&shape, p.to_vec())).expect("even"), &wts),
        &x,
        g.data(),
    ))
}

fn activation_instance(rng: &mut ChaCha8Rng, kind: Activation) -> Result<f64> {
    let x = match kind {
        Activation::Relu => away_from_zero(rng, 24, 1e-2),
        _ => uniform(rng, 24, -4.0, 4.0),
    };
    let shape = [2, 3, 4];
    let y = apply_activation(kind, &tensor(&shape, x.clone()));
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let g = activation_backward(kind, &y, &tensor(&shape, wts.clone()))?;
    Ok(compare_with_finite_differences(
        |p| weighted(&apply_activation(kind, &tensor(&shape, p.to_vec())), &wts),
        &x,
        g.data(),
    ))
}

fn dense_instance(rng: &mut ChaCha8Rng, rows: Option<usize>) -> Result<f64> {
    let (n, m) = (10, 7);
    let xs: Vec<usize> = match rows {
        Some(r) => vec![r, n],
        None => vec![n],
    };
    let x = uniform(rng, xs.iter().product(), -1.0, 1.0);
    let wv = uniform(rng, n * m, -1.0, 1.0);
    let b = uniform(rng, m, -1.0, 1.0);
    let y = dense(&tensor(&xs, x.clone()), &tensor(&[n, m], wv.clone()), &tensor(&[m], b.clone()))?;
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let g = dense_backward(&tensor(&xs, x.clone()), &tensor(&[n, m], wv.clone()), &tensor(y.shape(), wts.clone()), true)?;
    let eval = |x: &[f64], wv: &[f64], b: &[f64]| {
        let y = dense(&tensor(&xs, x.to_vec()), &tensor(&[n, m], wv.to_vec()), &tensor(&[m], b.to_vec()))
            .expect("shapes fixed");
        weighted(&y, &wts)
    };
    let gi = g.input.expect("input gradient requested");
    let e1 = compare_with_finite_differences(|p| eval(p, &wv, &b), &x, gi.data());
    let e2 = compare_with_finite_differences(|p| eval(&x, p, &b), &wv, g.weights.data());
    let e3 = compare_with_finite_differences(|p| eval(&x, &wv, p), &b, g.bias.data());
    Ok(e1.max(e2).max(e3))
}

fn pairwise_max_instance(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x = distinct(rng, 20);
    let (y, cache) = pairwise_max_forward(&tensor(&[20], x.clone()))?;
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let g = argmax_backward(&cache, &tensor(y.shape(), wts.clone()))?;
    Ok(compare_with_finite_differences(
        |p| weighted(&pairwise_max(&tensor(&[20], p.to_vec())).expect("even"), &wts),
        &x,
        g.data(),
    ))
}

fn mul_instance(rng: &mut ChaCha8Rng, broadcast: bool) -> Result<f64> {
    let a_shape = [4, 5, 3];
    let b_shape: Vec<usize> = if broadcast { vec![4, 5] } else { a_shape.to_vec() };
    let a = uniform(rng, 60, -1.0, 1.0);
    let b = uniform(rng, b_shape.iter().product(), -1.0, 1.0);
    let y = elementwise_mul(&tensor(&a_shape, a.clone()), &tensor(&b_shape, b.clone()))?;
    let wts = uniform(rng, y.len(), -1.0, 1.0);
    let (ga, gb) = elementwise_mul_backward(&tensor(&a_shape, a.clone()), &tensor(&b_shape, b.clone()), &tensor(y.shape(), wts.clone()))?;
    let eval = |a: &[f64], b: &[f64]| {
        weighted(
            &elementwise_mul(&tensor(&a_shape, a.to_vec()), &tensor(&b_shape, b.to_vec())).expect("shapes fixed"),
            &wts,
        )
    };
    let e1 = compare_with_finite_differences(|p| eval(p, &b), &a, ga.data());
    let e2 = compare_with_finite_differences(|p| eval(&a, p), &b, gb.data());
    Ok(e1.max(e2))
}

fn cosine_instance(rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = uniform(rng, 16, -1.0, 1.0);
    let a = uniform(rng, 16, 0.0, 1.0);
    let g = cosine_loss(&p, &a)?;
    Ok(compare_with_finite_differences(
        |q| cosine_loss(&q.to_vec(), &a).expect("nonzero target").value,
        &p,
        &g.grad,
    ))
}

fn mse_instance(rng: &mut ChaCha8Rng) -> Result<f64> {
    let p = uniform(rng, 3, -1.0, 1.0);
    let t = uniform(rng, 3, -1.0, 1.0);
    let truth = [t[0], t[1], t[2]];
    let g = action_mse(&[p[0], p[1], p[2]], &truth);
    Ok(compare_with_finite_differences(
        |q| action_mse(&[q[0], q[1], q[2]], &truth).value,
        &p,
        &g.grad,
    ))
}

fn sparsity_instance(rng: &mut ChaCha8Rng, variant: SparsityVariant) -> Result<f64> {
    let m = uniform(rng, 36, 0.05, 0.95);
    let g = attention_sparsity(&m, variant)?;
    Ok(compare_with_finite_differences(
        |q| attention_sparsity(q, variant).expect("in range").value,
        &m,
        &g.grad,
    ))
}

type Check = fn(&mut ChaCha8Rng) -> Result<f64>;

fn checks() -> Vec<(&'static str, Check)> {
    vec![
        ("conv2d/valid", |r| conv_instance(r, Padding::Valid)),
        ("conv2d/same", |r| conv_instance(r, Padding::Same)),
        ("conv2d/periodic", |r| conv_instance(r, Padding::Periodic)),
        ("maxpool2x2", maxpool_instance),
        ("activation/relu", |r| activation_instance(r, Activation::Relu)),
        ("activation/sigmoid", |r| activation_instance(r, Activation::Sigmoid)),
        ("activation/linear", |r| activation_instance(r, Activation::Linear)),
        ("dense", |r| dense_instance(r, None)),
        ("dense/batched", |r| dense_instance(r, Some(3))),
        ("pairwise_max", pairwise_max_instance),
        ("elementwise_mul/broadcast", |r| mul_instance(r, true)),
        ("elementwise_mul/same", |r| mul_instance(r, false)),
        ("cosine_loss", cosine_instance),
        ("action_mse", mse_instance),
        ("attention_sparsity/squared", |r| sparsity_instance(r, SparsityVariant::Squared)),
        ("attention_sparsity/linear", |r| sparsity_instance(r, SparsityVariant::Linear)),
    ]
}

/// Runs every operator check on `instances` random draws each.
pub fn run_suite(instances: usize, seed: u64) -> Result<Vec<GradCheckOutcome>> {
    let mut out = Vec::new();
    for (k, (name, check)) in checks().into_iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32) ^ i as u64);
            worst = worst.max(check(&mut rng)?);
        }
        out.push(GradCheckOutcome {
            name: name.to_string(),
            instances,
            max_rel_err: worst,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let x = [0.3, -0.7];
        let err = compare_with_finite_differences(|p| p[0] * p[0] + p[1], &x, &[0.6, 2.0]);
        assert!(err > 0.4);
        let ok = compare_with_finite_differences(|p| p[0] * p[0] + p[1], &x, &[0.6, 1.0]);
        assert!(ok < 1e-8);
    }

    #[test]
    fn suite_passes_on_a_few_instances() {
        for outcome in run_suite(2, 99).unwrap() {
            assert!(outcome.passed(), "{outcome:?}");
        }
    }
}
