#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod analyze;
pub mod augment;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod optim;
mod par;
pub mod rng;
pub mod split;
pub mod tensor;
pub mod train;

pub use element::Element;
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
