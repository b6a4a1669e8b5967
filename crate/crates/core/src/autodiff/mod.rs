//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records every primitive as it is evaluated. Calling
//! [`Graph::backward`] on a `1 x 1` node fills in gradients for every node that
//! depends on a trainable leaf. Gradients of leaves used more than once are
//! summed.

mod gradcheck;
mod graph;
mod matrix;

pub use gradcheck::{check_primitives, grad_check, random_matrix, relative_error, GradCheckReport, FD_STEP};
pub use graph::{Axis, Graph, GraphError, NodeId};
#[cfg(test)]
pub(crate) use graph::sigmoid;
pub use matrix::Matrix;
