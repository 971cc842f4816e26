//! Saliency-guided behavioral cloning over a toy top-down driving world.
//!
//! The crate covers the whole pipeline: a small differentiable-operator
//! library ([`diffcore`]), the driving simulator and oracle driver
//! ([`simworld`]), gaze-to-saliency preprocessing ([`gazeprep`]), network
//! definitions and checkpoints ([`nets`]), the training procedures
//! ([`trainer`]) and held-out evaluation ([`evalreport`]).

pub mod diffcore;
pub mod error;
pub mod evalreport;
pub mod gazeprep;
pub mod nets;
pub mod simworld;
pub mod trainer;

pub use error::{Error, Result};
