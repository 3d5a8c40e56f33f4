//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! The primitive set is deliberately small: it covers exactly what the
//! geometric layers and the Conv1D/LSTM head need. Gradients of every
//! primitive are validated against central finite differences in the tests.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use tape::{logistic, softmax, Tape, Var, ARCCOS_EPS};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
