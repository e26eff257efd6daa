//! From-scratch reverse-mode automatic differentiation.
//!
//! The pieces: a dense row-major [`Tensor`], an append-only tape [`Graph`]
//! whose backward pass is one reverse sweep, a named [`ParamStore`] that
//! owns the learnable tensors, Adam, and finite-difference checking.

mod adam;
mod gradcheck;
mod graph;
mod init;
mod params;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use gradcheck::{central_difference, relative_error, WorstCoord};
pub use graph::{log_sum_exp, stable_softmax, Graph, Node};
pub use init::{init_tensor, InitScheme};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
