//! Numerical laboratory for the conditioning effect of multi-head attention.
//!
//! * [`linalg`]: matrix carrier, one-sided Jacobi SVD, numerical rank, condition numbers.
//! * [`rmt`]: Monte-Carlo sweeps over concatenated Gaussian head blocks.
//! * [`model`]: a toy transformer classifier with hand-written backpropagation.
//! * [`probe`]: condition numbers of attention outputs inside real forward passes.
//! * [`train`]: synthetic tasks, AdamW and the training loop / depth×heads grids.
//! * [`planner`]: exact parameter counts for ViT-style encoders.
//! * [`cli`]: the `theory`, `train`, `plan` and `report` commands and their file formats.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod probe;
pub mod rmt;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
