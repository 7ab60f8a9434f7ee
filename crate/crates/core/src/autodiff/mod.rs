//! Dense `f64` tensors and a reverse-mode gradient tape.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, relative_error, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
