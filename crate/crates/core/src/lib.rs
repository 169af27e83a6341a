//! Evidential classification toolkit.
//!
//! A from-scratch implementation of Dirichlet-based evidential learning
//! with a variational objective:
//!
//! * [`special`] — log-gamma / digamma / trigamma / softplus with pinned
//!   accuracy targets.
//! * [`dirichlet`] — Dirichlet moments, sampling, and the generalized KL
//!   divergence to a Dirichlet prior, with analytic gradients.
//! * [`head`] — cosine prototype evidence layer with a structural bound on
//!   per-class evidence.
//! * [`loss`] — expected-MSE + effective-KL variational objective, plus the
//!   classic masked-KL baseline.
//! * [`nn`] — minimal feed-forward backbone with exact backprop and
//!   power-iteration spectral norms.
//! * [`train`] — deterministic mini-batch training with KL annealing.
//! * [`eval`] — uncertainty-scored prediction, AUROC, FPR95.
//! * [`data`] — seedable synthetic datasets and CSV I/O.
//! * [`theory`] — closed-form bound constants and empirical certification
//!   that the implemented gradients respect them.
//! * [`checkpoint`] — bit-exact binary model serialization.

pub mod checkpoint;
pub mod data;
pub mod dirichlet;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod head;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod special;
pub mod theory;
pub mod train;

pub use data::Dataset;
pub use dirichlet::{DirichletParams, PriorParams};
pub use error::{Error, Result};
pub use eval::{EvalReport, Prediction};
pub use head::{EvidenceHead, EvidenceVector};
pub use loss::{LabelVector, LossConfig};
pub use nn::{Activation, Mlp};
pub use train::{EpochStats, Objective, OptimizerKind, TrainConfig, TrainState};
