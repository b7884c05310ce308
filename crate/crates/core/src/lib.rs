//! Continual-learning engine built around weight-generating bundle layers.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`] — dense row-major `f64` tensors plus the deterministic
//!   [`rng::RngStream`] used everywhere randomness is needed.
//! * [`linalg`] — Householder QR and a Jacobi eigensolver (orthogonal init
//!   and PCA live on top of these).
//! * [`autodiff`] — a tape-based reverse-mode engine over the tensor ops.
//! * [`nn`] — linear, bundle and bioclock layers, model assembly,
//!   initialization schemes and checkpointing.
//! * [`optim`] — Adam, learning-rate schedules, losses and the supervised
//!   training loop.
//! * [`experiments`] — dataset generators and the supervised experiment
//!   protocols (capacity sweep, sequential tasks, spaced repetition, PCA).
//! * [`rl`] — a scratch pendulum environment plus time-aware deep
//!   Q-learning and DDPG variants that train without replay stabilisation.
//!
//! Everything is deterministic given a seed: the same configuration and
//! seed produce byte-identical result tables.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod report;
pub mod rl;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use tensor::Tensor;
