//! A small reverse-mode differentiation kernel over rank-2 `f64` tensors.
//!
//! Enough to express the relationness and sector heads and their losses:
//! linear maps, concatenation, Hadamard products, sigmoid, binary
//! cross-entropy and mean reduction, plus a finite-difference checker and an
//! adaptive-moment optimizer.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{sigmoid, Gradients, Graph, Var, BCE_EPS};
pub use optim::Adam;
pub use tensor::{ParamSet, Tensor};
