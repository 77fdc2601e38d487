//! Stochastic nonlinearities built from doubly truncated Gaussians, with
//! three models on top of them: a restricted Boltzmann machine with
//! truncated-Gaussian hidden units, its temporal extension for binary
//! frame sequences, and a supervised truncated Gaussian graphical model
//! for regression. Truncation points are ordinary trainable parameters in
//! all three.
//!
//! Batch-level work (contrastive-divergence gradients, annealed importance
//! sampling chains, per-example mean-field) runs on rayon by default;
//! build with `--no-default-features` for a sequential fallback that
//! produces bit-identical numbers.

pub mod ais;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod exec;
pub mod mat;
pub mod optim;
pub mod oracle;
pub mod rbm;
pub mod tggm;
pub mod trbm;
pub mod truncnorm;
pub mod trug;

pub use error::{Result, TrugError};
