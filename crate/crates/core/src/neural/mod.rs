//! Minimal dense reverse-mode autodiff engine and MLP layers.

pub mod check;
mod graph;
mod network;
mod optim;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use network::{Activation, Dense, NetOutput, Network};
pub use optim::{sgd_step, Sgd};
pub use tensor::Tensor;
