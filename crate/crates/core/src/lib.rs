//! DeepMR click-through-rate model.
//!
//! A ReZero deep network and a multiplicative-ReZero multi-head self-attention
//! block run in parallel over shared field embeddings; their outputs are mixed
//! by a scalar `beta` and reduced through a sigmoid. Every backward rule is
//! written by hand on top of the small dense kernels in [`numerics`].
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`). Training,
//! checkpoints and the CLI use `f64`; the aliases below name those types.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Matrix, ParamSet, Real};

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type AdamState64 = train::AdamState<f64>;
pub type GradCheckReport64 = numerics::GradCheckReport<f64>;
