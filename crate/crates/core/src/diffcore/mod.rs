//! Differentiable operators, losses and the SGD optimizer.
//!
//! There is no general autodiff here: each operator exposes a forward pass
//! that returns what its backward pass needs, and the networks chain them by
//! hand. Every backward pass is covered by [`gradcheck`].

pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod sgd;
pub mod tensor;

pub use loss::{action_mse, attention_sparsity, cosine_loss, total_loss, Scored, SparsityVariant};
pub use ops::{
    apply_activation, conv2d, dense, elementwise_mul, maxpool2x2, pairwise_max, Activation,
    Padding,
};
pub use sgd::{sgd_step, Gradients, Param, ParamSet, SgdConfig};
pub use tensor::{Real, Tensor};
