//! A small reverse-mode automatic differentiation engine with exactly the
//! operators the training pipeline needs.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheck, Probe, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use graph::{BnMode, Gradients, Graph, Var};
pub use kernels::ResampleMap;
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests;
