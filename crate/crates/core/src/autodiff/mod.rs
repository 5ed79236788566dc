//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass. Calling
//! [`Tape::backward`] consumes the tape and replays it in reverse, producing a
//! [`Gradients`] map keyed by [`Var`].

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, numeric_gradient};
#[cfg(test)]
pub(crate) use tape::scalar;
pub use tape::{CustomOp, Gradients, Mode, Tape, Var};
