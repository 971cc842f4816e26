use serde::{Deserialize, Serialize};

use super::tensor::Real;
use crate::error::{Error, Result};

/// A scalar loss together with its gradient w.r.t. the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored<T> {
    pub value: T,
    pub grad: Vec<T>,
}

/// Predictions below this norm are treated as all-zero.
pub const COSINE_EPS: f64 = 1e-12;

/// Negative cosine similarity between a predicted and a target map.
pub fn cosine_loss<T: Real>(psm: &[T], asm: &[T]) -> Result<Scored<T>> {
    if psm.len() != asm.len() {
        return Err(Error::shape("cosine_loss", &[psm.len()], &[asm.len()]));
    }
    // Accumulate in f64 so the f32 training path does not lose the [-1, 1] bound.
    let dot: f64 = psm.iter().zip(asm).map(|(p, a)| p.as_f64() * a.as_f64()).sum();
    let pn = psm.iter().map(|p| p.as_f64().powi(2)).sum::<f64>().sqrt();
    let an = asm.iter().map(|a| a.as_f64().powi(2)).sum::<f64>().sqrt();
    if an <= 0.0 || !an.is_finite() {
        return Err(Error::invalid(
            "cosine_loss target has zero norm (ill-posed saliency target)",
        ));
    }
    if pn < COSINE_EPS {
        return Ok(Scored {
            value: T::zero(),
            grad: vec![T::zero(); psm.len()],
        });
    }
    let cos = (dot / (pn * an)).clamp(-1.0, 1.0);
    let grad = psm
        .iter()
        .zip(asm)
        .map(|(p, a)| {
            let g = -(a.as_f64() / (pn * an) - dot * p.as_f64() / (pn.powi(3) * an));
            T::real(g)
        })
        .collect();
    Ok(Scored {
        value: T::real(-cos),
        grad,
    })
}

/// Mean squared error over (steering, throttle, brake).
pub fn action_mse<T: Real>(pred: &[T; 3], truth: &[T; 3]) -> Scored<T> {
    let three = T::real(3.0);
    let two = T::real(2.0);
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(3);
    for (&p, &t) in pred.iter().zip(truth) {
        let d = p - t;
        value = value + d * d;
        grad.push(two * d / three);
    }
    Scored {
        value: value / three,
        grad,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityVariant {
    /// Mean of squared attention values.
    #[default]
    Squared,
    /// Mean of attention values.
    Linear,
}

impl std::str::FromStr for SparsityVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Self::Squared),
            "linear" => Ok(Self::Linear),
            other => Err(Error::invalid(format!(
                "unknown sparsity variant {other:?} (expected squared|linear)"
            ))),
        }
    }
}

/// Values may stray outside [0, 1] by this much before being rejected.
pub const SPARSITY_RANGE_TOL: f64 = 1e-6;

/// Average attention penalty over a map with values in [0, 1].
pub fn attention_sparsity<T: Real>(map: &[T], variant: SparsityVariant) -> Result<Scored<T>> {
    if map.is_empty() {
        return Err(Error::invalid("attention_sparsity of an empty map"));
    }
    if let Some(bad) = map.iter().map(|v| v.as_f64()).find(|v| {
        !(-SPARSITY_RANGE_TOL..=1.0 + SPARSITY_RANGE_TOL).contains(v)
    }) {
        return Err(Error::invalid(format!(
            "attention value {bad} outside [0, 1]"
        )));
    }
    let n = T::real(map.len() as f64);
    let (value, grad) = match variant {
        SparsityVariant::Squared => {
            let sum = map.iter().fold(T::zero(), |acc, &v| acc + v * v);
            let two = T::real(2.0);
            (sum / n, map.iter().map(|&v| two * v / n).collect())
        }
        SparsityVariant::Linear => {
            let sum = map.iter().fold(T::zero(), |acc, &v| acc + v);
            (sum / n, vec![T::one() / n; map.len()])
        }
    };
    Ok(Scored { value, grad })
}

/// Weighted sum of the sparsity and driving losses.
pub fn total_loss(loss1: f64, loss2: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    validate_lambdas(lambda1, lambda2)?;
    Ok(lambda1 * loss1 + lambda2 * loss2)
}

pub(crate) fn validate_lambdas(lambda1: f64, lambda2: f64) -> Result<()> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) || !lambda1.is_finite() || !lambda2.is_finite() {
        return Err(Error::invalid(format!(
            "loss weights must be finite and nonnegative, got ({lambda1}, {lambda2})"
        )));
    }
    if lambda1 == 0.0 && lambda2 == 0.0 {
        return Err(Error::invalid("loss weights must not both be zero"));
    }
    Ok(())
}
