use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// L2 coefficient added to the gradient (`g + decay * w`).
    pub decay: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            decay: 0.005,
            batch_size: 300,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid(format!(
                "decay must be nonnegative, got {}",
                self.decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

/// One named trainable tensor and its momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub velocity: Tensor<T>,
}

/// Ordered collection of trainable tensors.
///
/// Iteration order is insertion order and never changes; checkpoints and
/// [`Gradients`] rely on it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T = f32> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let velocity = Tensor::zeros(value.shape().to_vec());
        self.params.push(Param {
            name,
            value,
            velocity,
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.params[i].value)
    }

    pub fn value(&self, index: usize) -> &Tensor<T> {
        &self.params[index].value
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.params[index].value
    }

    /// Total number of scalars across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn reset_momentum(&mut self) {
        for p in &mut self.params {
            p.velocity.fill(T::zero());
        }
    }

    /// Zero-filled gradient buffers matching this set.
    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            grads: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect(),
        }
    }
}

/// Gradient buffers parallel to a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, index: usize) -> &Tensor<T> {
        &self.grads[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.grads[index]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.grads.iter()
    }

    pub fn any_nonzero(&self) -> bool {
        self.grads.iter().any(|g| g.data().iter().any(|v| *v != T::zero()))
    }
}

/// One momentum-SGD update with L2 weight decay:
/// `v <- momentum * v - lr * (g + decay * w)`, `w <- w + v`.
///
/// The whole step is rejected, leaving `params` untouched, if any gradient
/// is non-finite.
pub fn sgd_step<T: Real>(params: &mut ParamSet<T>, grads: &Gradients<T>, cfg: &SgdConfig) -> Result<()> {
    cfg.validate()?;
    if grads.len() != params.len() {
        return Err(Error::shape("sgd_step", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.params.iter().zip(&grads.grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::shape("sgd_step", p.value.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {:?}; step rejected",
                p.name
            )));
        }
    }
    let lr = T::real(cfg.learning_rate);
    let mu = T::real(cfg.momentum);
    let decay = T::real(cfg.decay);
    for (p, g) in params.params.iter_mut().zip(&grads.grads) {
        let w = p.value.data_mut();
        let v = p.velocity.data_mut();
        for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g.data()) {
            *vi = mu * *vi - lr * (gi + decay * *wi);
            *wi = *wi + *vi;
        }
    }
    Ok(())
}
