//! Numeric kernels behind the graph operators.
//!
//! Every kernel works on raw tensors; [`crate::graph::Graph`] records them and
//! routes gradients.

pub mod basic;
pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;

pub use conv::Conv2dParams;
pub use norm::{BatchNormConfig, NormStats};
