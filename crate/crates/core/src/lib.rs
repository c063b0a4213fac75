//! Streaming inference engine and analysis toolkit for temporal-shift video
//! networks.
//!
//! The crate builds small 2D residual backbones, moves temporal information
//! between frames by shifting a fraction of channels (bi-directionally for
//! offline clips, uni-directionally for causal streams), and ships the
//! accounting tools to verify that the shift costs zero FLOPs and zero
//! parameters while measuring the data movement it does cost.

pub mod dissect;
pub mod error;
pub mod fixture;
pub mod io;
pub mod model;
pub mod opcount;
pub mod ops;
pub mod profile;
pub mod shift;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
