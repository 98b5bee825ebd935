//! Large-margin softmax (L-Softmax) loss and the small amount of network
//! machinery needed to train and measure features with it.
//!
//! The crate is organised bottom-up:
//!
//! * [`angular`] holds the scalar margin function ψ, the multiple-angle
//!   expansion of `cos(mθ)` and their derivatives.
//! * [`loss`] assembles batch losses and analytic gradients from it.
//! * [`tensor`] and [`nn`] provide a dense array type and naive layers.
//! * [`optim`] runs momentum SGD with the λ annealing schedule.
//! * [`data`], [`metrics`], [`gradcheck`] and [`params_io`] cover input
//!   parsing, evaluation, finite-difference checks and serialization.
//!
//! All arithmetic is `f64`.

pub mod angular;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params_io;
pub mod tensor;

pub use angular::Margin;
pub use error::{Error, Result};
pub use tensor::Tensor;
