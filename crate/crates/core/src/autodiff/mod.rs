//! Minimal reverse-mode differentiation for the deep decoder's operations,
//! plus an Adam optimizer.

mod adam;
mod graph;
pub mod kernels;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, Var};
