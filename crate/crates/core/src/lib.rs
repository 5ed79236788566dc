//! Hybrid selective state-space and multi-head attention forecasting for
//! multivariate time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode differentiation over [`Tensor`]s
//! - [`attention`]: multi-head scaled dot-product attention and sinusoidal
//!   positions
//! - [`ssm`]: zero-order-hold discretisation, sequential and prefix-scan
//!   selective scans, and the gated Mamba-style block
//! - [`model`]: instance normalisation, embeddings, the four hybrid blocks and
//!   the projection head, plus checkpoints
//! - [`data`]: CSV ingestion, chronological splits, scaling and windows
//! - [`train`]: Adam, losses, baselines, the epoch loop and reports
//! - [`verify`]: the finite-difference gradient suite

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod model;
pub mod params;
pub mod rng;
pub mod ssm;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autodiff::{Gradients, Mode, Tape, Var};
pub use error::{MatError, Result};
pub use model::{MatModel, ModelConfig};
pub use params::{Bound, Linear, ParamId, ParamStore};
pub use rng::SplitRng;
pub use tensor::Tensor;
