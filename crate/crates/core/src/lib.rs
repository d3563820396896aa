//! Transformer-encoder regression of interaction dwell time.
//!
//! The crate covers the whole pipeline: interaction logs are encoded into
//! fixed-length windows ([`data`]), a from-scratch encoder with its own
//! reverse-mode autodiff ([`numerics`], [`model`]) is fit with Adam
//! ([`train`]), scored with MSE/RMSE/MAPE/RMAE ([`eval`]), and studied with
//! sensitivity sweeps ([`experiments`]).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Activation, Graph, NodeId, Tensor};
