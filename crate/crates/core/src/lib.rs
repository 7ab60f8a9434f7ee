pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod rng;

pub use autodiff::{Tape, Tensor, Var};
pub use error::{CheckpointError, Error, Result};
